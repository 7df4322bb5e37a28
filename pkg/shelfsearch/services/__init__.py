# Services package for the simulation, search and benchmark logic
