import pathlib

import pytest

import videoqtr

ASSETS = pathlib.Path(__file__).resolve().parents[2] / "assets" / "suite"

WORLD = {
    "noise_seed": 17,
    "video": {
        "descriptor": {"id": "lone", "duration_s": 600.0, "fps": 1.0},
        "background_embedding": [1.0, 0.0, 0.0, 0.0],
        "noise_scale": 1e-3,
        "events": [
            {
                "interval": {"start_s": 400.0, "end_s": 430.0},
                "description": "a diver checks the coral buoy",
                "embedding": [0.0, 1.0, 0.0, 0.0],
                "answer": "The diver checks the coral buoy.",
                "partial_answer": "Someone swims near the buoy.",
            }
        ],
    },
    "questions": [
        {
            "id": "q1",
            "text": "What does the diver check underwater?",
            "gold_answer": "The diver checks the coral buoy.",
            "gold_interval": {"start_s": 400.0, "end_s": 430.0},
        }
    ],
}


def test_version():
    assert videoqtr.__version__ == "0.1.0"
    assert videoqtr.ENGINE_NAME == "videoqtr"
    assert videoqtr.TRACE_FORMAT == "videoqtr-trace/1"


def test_run_question_answers_correctly():
    result = videoqtr.run_question(WORLD, "q1")
    assert result["correct"]
    assert result["answer"] == "The diver checks the coral buoy."
    assert result["terminated_by"] == "high-confidence"
    assert result["total_frames"] > 0
    assert result["embed_calls"] == result["total_frames"]
    interval = result["answer_interval"]
    assert interval["start_s"] < 430.0 and interval["end_s"] > 400.0


def test_replay_reproduces_the_result():
    result = videoqtr.run_question(WORLD, "q1", {"seed": 3})
    replayed = videoqtr.replay_trace(result["trace_ndjson"])
    assert replayed["fingerprint"] == result["fingerprint"]
    assert replayed["trace_hash"] == result["trace_hash"]


def test_same_seed_runs_hash_identically():
    a = videoqtr.run_question(WORLD, "q1", {"seed": 5})
    b = videoqtr.run_question(WORLD, "q1", {"seed": 5})
    assert a["trace_hash"] == b["trace_hash"]


def test_oracle_finds_the_event():
    oracle = videoqtr.oracle(WORLD, "q1")
    assert oracle["found"]
    assert oracle["frames_scanned"] == 64
    assert oracle["answer_interval"]["start_s"] <= 430.0
    assert oracle["answer_interval"]["end_s"] >= 400.0


def test_run_suite_on_shipped_world():
    report = videoqtr.run_suite([ASSETS / "household.json"], workers=1)
    assert report["accuracy"] == 1.0
    assert report["failures"] == 0
    assert len(report["per_question"]) == 16


def test_unknown_question_raises():
    with pytest.raises(videoqtr.EngineError):
        videoqtr.run_question(WORLD, "nope")


def test_grading_helpers():
    assert videoqtr.normalize_answer("The Diver!") == "the diver"
    assert videoqtr.extract_choice_letter("Answer: c") == "C"
    assert videoqtr.grade_answer("C.", "C) The cat naps.")
    assert not videoqtr.grade_answer("B", "C) The cat naps.")
