#!/usr/bin/env python3
"""
Shelf Search Simulator
Main entry point: command line (gen / rollout / bench / report / serve)
"""

from shelfsearch.cli import cli

if __name__ == "__main__":
    cli()
