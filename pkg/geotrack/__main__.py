from geotrack.cli import cli

cli.cli(prog_name="python -m geotrack")
