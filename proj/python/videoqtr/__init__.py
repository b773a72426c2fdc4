"""Python surface for the videoqtr engine.

All structured values cross the boundary as JSON strings; the helpers here
parse them so callers work with plain dicts and lists.
"""

import json as _json

from videoqtr._core import (
    ENGINE_NAME,
    TRACE_FORMAT,
    EngineError,
    __version__,
    extract_choice_letter,
    grade_answer,
    normalize_answer,
)
from videoqtr import _core

__all__ = [
    "ENGINE_NAME",
    "TRACE_FORMAT",
    "EngineError",
    "__version__",
    "ablation_table",
    "duration_sweep",
    "extract_choice_letter",
    "grade_answer",
    "normalize_answer",
    "oracle",
    "replay_trace",
    "run_question",
    "run_suite",
]


def run_question(world_doc, question_id, cfg=None):
    """Run one question of a world document; returns the result as a dict."""
    return _json.loads(
        _core.run_question(_dump(world_doc), question_id, _dump_cfg(cfg))
    )


def replay_trace(trace_ndjson):
    """Re-execute a recorded trace; returns fingerprint and hash."""
    return _json.loads(_core.replay_trace(trace_ndjson))


def run_suite(world_paths, cfg=None, workers=0, trace_dir=""):
    """Run every question in the given world files; returns the report."""
    return _json.loads(
        _core.run_suite([str(p) for p in world_paths], _dump_cfg(cfg), workers, trace_dir)
    )


def oracle(world_doc, question_id):
    """Brute-force window scan for one question."""
    return _json.loads(_core.oracle(_dump(world_doc), question_id))


def duration_sweep(world_paths, durations, cfg=None):
    """Frame fraction per duration for the first question of the suite."""
    return _json.loads(
        _core.duration_sweep([str(p) for p in world_paths], list(durations), _dump_cfg(cfg))
    )


def ablation_table(world_paths, cfg=None, seeds=1, workers=0):
    """Mean accuracy and frames for full/no-tm/no-tcr/no-rtp."""
    return _json.loads(
        _core.ablation_table([str(p) for p in world_paths], _dump_cfg(cfg), seeds, workers)
    )


def _dump(doc):
    return doc if isinstance(doc, str) else _json.dumps(doc)


def _dump_cfg(cfg):
    if cfg is None:
        return ""
    return cfg if isinstance(cfg, str) else _json.dumps(cfg)
