"""
Tests for the non-autoregressive timing probe.
"""
from src.data.schemas import SpeedStats
from src.diagnostics.timing import TimingResult, growth_ratios, sequential_baseline, timing_probe


def test_timing_probe_shapes(tiny_model):
    """Test one result per frame count with positive timings."""
    results = timing_probe(tiny_model, [1, 2, 3], SpeedStats(min_ratio=2.0, max_ratio=6.0), frame_counts=(2, 8), repeats=1)
    assert [r.n_frames for r in results] == [2, 8]
    assert all(r.parallel_seconds > 0 and r.sequential_seconds > 0 for r in results)
    assert growth_ratios(results)["frames"] == 4.0


def test_sequential_baseline_runs_every_length(tiny_model, mocker):
    """Test the per-frame baseline calls the prior path once per frame."""
    spy = mocker.spy(tiny_model, "forward_infer")
    sequential_baseline(tiny_model, [1, 2], SpeedStats(min_ratio=2.0, max_ratio=6.0), 5, seed=0)
    assert [c.kwargs["override_frames"] for c in spy.call_args_list] == [1, 2, 3, 4, 5]


def test_speedup():
    """Test the speedup ratio."""
    assert TimingResult(n_frames=4, parallel_seconds=0.5, sequential_seconds=2.0).speedup == 4.0
