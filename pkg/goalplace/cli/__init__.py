"""Command-line surface: one subcommand per workflow step."""
