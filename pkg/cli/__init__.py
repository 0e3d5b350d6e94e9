"""
Command layer - configuration models, input validation and subcommands
"""

from .commands import COMMAND_REGISTRY, run
from .models import RunConfig

__all__ = ['COMMAND_REGISTRY', 'RunConfig', 'run']
