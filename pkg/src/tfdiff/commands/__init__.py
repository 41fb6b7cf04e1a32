"""Subcommand implementations; each returns a report and raises on failure."""
