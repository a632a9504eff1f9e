"""Command-line subcommands, run manifests and the benchmark sweep."""
