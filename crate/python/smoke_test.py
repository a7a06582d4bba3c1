"""Smoke test for the hoiseg Python module.

Build the module first, e.g. `maturin develop -m crates/py/Cargo.toml`, or
copy target/release/libhoiseg.so next to this file as hoiseg.so.
"""

import json
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import hoiseg  # noqa: E402


def main():
    assert hoiseg.default_window_params(30) == (5, 3)
    assert hoiseg.default_window_params(60) == (10, 6)
    assert abs(hoiseg.iou([0, 0, 2, 2], [1, 1, 3, 3]) - 1 / 7) < 1e-12
    assert hoiseg.temporal_iosa((0, 99), (50, 59)) == 1.0
    assert hoiseg.run_fsm([1, 1, 1, 0, 0, 0, 0], 5, 3) == [False, False, True, True, True, False, False]

    trace = hoiseg.VideoTrace.scripted(
        "smoke",
        30.0,
        300,
        [
            ("left", 10, 69, "lid"),
            ("right", 100, 139, "kettle"),
            ("right", 200, 259, "cup"),
        ],
    )
    again = hoiseg.VideoTrace.from_jsonl(trace.to_jsonl())
    assert again.frame_count == 300

    cfg = hoiseg.PipelineConfig("iosa_threshold = 0.5\n")
    assert cfg.window_params(trace.fps) == (5, 3)
    result = hoiseg.run_pipeline(trace, cfg)
    steps = result.steps
    assert [(s, e) for s, e, _ in steps.segments] == [(12, 71), (102, 141), (202, 261)], steps.segments
    assert [c.hand for c in result.left] == ["left"]
    assert len(result.right) == 2

    truth = hoiseg.StepSegmentation("smoke", 30.0, [(10, 69), (100, 139), (200, 259)])
    report = hoiseg.f1_report(steps, truth)
    assert [r["k"] for r in report] == [0.1, 0.3, 0.5]
    assert all(r["f1"] == 1.0 for r in report)

    round_trip = hoiseg.StepSegmentation.from_json(steps.to_json())
    assert json.loads(round_trip.to_json()) == json.loads(steps.to_json())
    svg = hoiseg.render_timeline([("ours", steps), ("truth", truth)], frames=300)
    assert svg.startswith("<svg") and svg.count("<title>") == 6

    try:
        hoiseg.PipelineConfig("min_score = 3.0")
    except ValueError:
        pass
    else:
        raise AssertionError("invalid config accepted")

    print("hoiseg", hoiseg.__version__, "smoke test passed:", len(steps), "steps")


if __name__ == "__main__":
    main()
