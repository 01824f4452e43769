import numpy as np
import pytest

from qbrachy.errors import DomainError
from qbrachy.robustness import (DistortionSpec, distort, distortion, infidelity_sweep,
                                write_sweep)

FRACTIONS = tuple(round(0.025 * k, 3) for k in range(7))


@pytest.fixture(scope="module")
def pulses(solution):
    return solution.pulses


def test_zero_distortion_is_identity(pulses):
    assert distort(pulses, DistortionSpec(2, 0.0, 1)) is pulses


def test_distortion_vanishes_at_sine_zeros(pulses):
    for kappa in (1, 2, 3):
        d = distortion(pulses, DistortionSpec(3, 0.1 * pulses.t_qb, kappa))
        assert abs(d[0]) < 1e-12 and abs(d[-1]) < 1e-9


def test_first_pulse_distorts_least(pulses):
    spec = dict(t_n=0.1 * pulses.t_qb, kappa=1)
    d1 = np.max(np.abs(distortion(pulses, DistortionSpec(1, **spec))))
    d2 = np.max(np.abs(distortion(pulses, DistortionSpec(2, **spec))))
    assert d1 < d2


def test_only_target_pulse_changes(pulses):
    out = distort(pulses, DistortionSpec(2, 0.1 * pulses.t_qb, 2))
    assert np.array_equal(out.amplitude[[0, 2]], pulses.amplitude[[0, 2]])
    assert out.phase == pulses.phase
    assert out.slope is None


def test_large_distortion_clamps(pulses):
    out = distort(pulses, DistortionSpec(3, 5.0 * pulses.t_qb, 1))
    assert out.clamped
    assert out.abs.min() >= 0.0


def test_spec_domain():
    with pytest.raises(DomainError):
        DistortionSpec(4, 0.1, 1)
    with pytest.raises(DomainError):
        DistortionSpec(1, -0.1, 1)
    with pytest.raises(DomainError):
        DistortionSpec(1, 0.1, 0)


@pytest.fixture(scope="module")
def sweeps(pulses):
    return {n: infidelity_sweep(pulses, n, (1, 2, 3), FRACTIONS) for n in (1, 2, 3)}


def test_baseline_infidelity(sweeps):
    for rows in sweeps.values():
        assert all(r.infidelity < 1e-3 for r in rows if r.t_n_over_tqb == 0.0)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_monotone_growth_kappa_one(sweeps, n):
    values = [r.infidelity for r in sweeps[n] if r.kappa == 1]
    assert np.all(np.diff(values) > 0.0)
    assert max(values) < 0.1


def test_first_pulse_no_worse_than_third_at_low_frequency(sweeps):
    for a, b in zip(sweeps[1], sweeps[3]):
        assert (a.kappa, a.t_n_over_tqb) == (b.kappa, b.t_n_over_tqb)
        if a.kappa < 3:
            assert a.infidelity <= b.infidelity


def test_ordering_reverses_for_weak_fast_distortion(sweeps):
    # at kappa = 3 the third pulse's distortion averages out; for weak strengths
    # the first pulse then costs more, though both stay far below 1e-8
    one = {r.t_n_over_tqb: r.infidelity for r in sweeps[1] if r.kappa == 3}
    three = {r.t_n_over_tqb: r.infidelity for r in sweeps[3] if r.kappa == 3}
    assert one[0.025] > three[0.025]
    assert one[0.15] < three[0.15]
    assert max(one[0.025], three[0.025]) < 1e-8


def test_failing_cell_is_recorded(pulses):
    rows = infidelity_sweep(pulses, 2, (1,), (0.0, 1e4))
    assert rows[0].error is None
    assert np.isnan(rows[1].infidelity) and rows[1].error


def test_sweep_csv(sweeps, tmp_path):
    path = tmp_path / "r.csv"
    write_sweep(sweeps[1], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "pulse_index,kappa,t_n_over_Tqb,infidelity"
    assert len(lines) == 1 + 3 * len(FRACTIONS)
