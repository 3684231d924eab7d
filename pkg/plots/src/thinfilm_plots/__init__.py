"""Batch figure scripts for the thin-film solver's CSV/JSON outputs.

Strictly consumers of the declared file schemas: nothing here recomputes
physics, every reference value comes from columns already in the inputs
(or an explicitly passed scalar). Images are deterministic static files.
"""

__version__ = "0.1.0"
