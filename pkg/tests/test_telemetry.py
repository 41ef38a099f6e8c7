"""
Tests for telemetry records and CSV files.
"""
import pytest

from src.errors import FormatError, InternalConsistencyError
from src.training.telemetry import TelemetryRecord, TelemetryWriter, cumulative, read_telemetry


def _record(step: int, kls=(0.1, 0.2, 0.3)) -> TelemetryRecord:
    kls = list(kls)
    return TelemetryRecord(
        step=step, speed=0.01, recon=1.0 / 3.0, kl_total=sum(kls), gain=0.0, total=2.0,
        kl_per_layer=kls, cumulative_kl=cumulative(kls), lr=1e-4, grad_norm=0.5,
    )


def test_cumulative():
    """Test prefix sums in layer order."""
    assert cumulative([1.0, 2.0, 3.0]) == [1.0, 3.0, 6.0]
    assert cumulative([]) == []


def test_writer_round_trip(tmp_path):
    """Test rows read back exactly, including per-layer columns."""
    writer = TelemetryWriter(tmp_path / "t.csv")
    records = [_record(1), _record(2, (0.4, 0.0, 1e-12))]
    for r in records:
        writer.append(r)
    assert read_telemetry(tmp_path / "t.csv") == records


def test_writer_enforces_increasing_steps(tmp_path):
    """Test a repeated step is an accounting error."""
    writer = TelemetryWriter(tmp_path / "t.csv")
    writer.append(_record(3))
    with pytest.raises(InternalConsistencyError):
        writer.append(_record(3))


def test_writer_resume_and_truncate(tmp_path):
    """Test resuming continues after the last row and truncation drops later rows."""
    path = tmp_path / "t.csv"
    writer = TelemetryWriter(path)
    for step in (1, 2, 3):
        writer.append(_record(step))

    resumed = TelemetryWriter(path, resume=True)
    assert resumed.last_step == 3
    resumed.truncate_after(2)
    assert [r.step for r in read_telemetry(path)] == [1, 2]
    resumed.append(_record(3))
    assert [r.step for r in read_telemetry(path)] == [1, 2, 3]

    fresh = TelemetryWriter(path)
    assert not path.exists()
    assert fresh.last_step is None


def test_read_telemetry_errors(tmp_path):
    """Test missing files and missing columns."""
    with pytest.raises(FormatError):
        read_telemetry(tmp_path / "none.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("step,recon\n1,0.5\n")
    with pytest.raises(FormatError):
        read_telemetry(bad)
