"""Youla-parametrized mean-field control.

Thin re-export of the compiled ``_mfc`` extension. Experiment drivers take a
JSON configuration string (the same schema as the ``mfc_experiments`` CLI).
"""

from ._mfc import *  # noqa: F401,F403
from ._mfc import __version__

import json as _json


def run(kind, config=None, **overrides):
    """Run an experiment by name with a dict config; keyword overrides are merged at top level."""
    cfg = dict(config or {})
    cfg.update(overrides)
    drivers = {
        "scaling": run_scaling,  # noqa: F405
        "lemma-decay": run_lemma_decay,  # noqa: F405
        "simulate": run_simulation,  # noqa: F405
        "matching": run_matching,  # noqa: F405
    }
    if kind not in drivers:
        raise ValueError(f"unknown experiment {kind!r}")
    return drivers[kind](_json.dumps(cfg))
