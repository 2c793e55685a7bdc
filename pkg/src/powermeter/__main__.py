"""Allow ``python -m powermeter`` as an alias for the ``powermeter`` script."""

from .cli import entrypoint

entrypoint()
