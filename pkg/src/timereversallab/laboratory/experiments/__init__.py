"""One module per experiment kind."""
