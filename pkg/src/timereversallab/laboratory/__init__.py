"""Configurable laboratory runs: experiments, configuration and the command line entry point."""
