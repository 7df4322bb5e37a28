from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from shelfsearch import config


class PolicyConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["uniform", "dar", "der"]
    lookahead_n: int = Field(1, ge=1, le=3)
    tie_break: Literal["score_leftmost_left_first"] = "score_leftmost_left_first"
    blade_thickness: float = Field(config.BLADE_THICKNESS, ge=0.0)
    discontinuity_threshold: float = Field(config.DISCONTINUITY_THRESHOLD, gt=0.0)
    entropy_normalize: bool = config.ENTROPY_NORMALIZE
    node_budget: int = Field(config.DER_NODE_BUDGET, ge=1)

    @model_validator(mode="after")
    def _check_lookahead(self) -> "PolicyConfig":
        if self.kind != "der" and self.lookahead_n != 1:
            raise ValueError(f"lookahead_n only applies to der policies, got {self.lookahead_n} for {self.kind}")
        return self

    @property
    def name(self) -> str:
        return f"der{self.lookahead_n}" if self.kind == "der" else self.kind
