"""Configuration, orchestration and persistence for command-line experiments."""
