"""
CLI entry point for hypmoce when installed as a package.
"""


def main():
    """Main entry point for the hypmoce command."""
    from hypmoce.main import cli

    cli()
