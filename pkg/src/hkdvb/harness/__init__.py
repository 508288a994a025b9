"""Configuration files, run records and the command line interface."""
from .cli import run_command
from .configfile import format_config, parse_config, parse_config_text
from .records import RunRecord, write_records

__all__ = ["run_command", "parse_config", "parse_config_text", "format_config", "RunRecord",
           "write_records"]
