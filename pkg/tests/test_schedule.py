import numpy as np
import pytest

from nmsparse.schedule import Schedule, delta


def test_invalid_schedules_rejected():
    with pytest.raises(ValueError):
        Schedule(t_i=10, t_f=10)
    with pytest.raises(ValueError):
        Schedule(t_i=20, t_f=10)
    with pytest.raises(ValueError):
        Schedule(t_i=-1, t_f=10)
    with pytest.raises(ValueError):
        Schedule(t_i=0, t_f=10, kind="exponential")


@pytest.mark.parametrize("kind", ["cubic", "linear", "cosine"])
def test_endpoints_exact(kind):
    sched = Schedule(t_i=5, t_f=25, kind=kind)
    assert delta(5, sched) == 0.0
    assert delta(0, sched) == 0.0
    assert delta(25, sched) == 1.0
    assert delta(26, sched) == 1.0
    assert delta(1000, sched) == 1.0


def test_cubic_midpoint_hand_value():
    sched = Schedule(t_i=0, t_f=90, kind="cubic")
    assert abs(delta(45, sched) - 0.875) <= 1e-12


def test_linear_and_cosine_midpoints():
    assert abs(delta(45, Schedule(0, 90, "linear")) - 0.5) <= 1e-12
    assert abs(delta(45, Schedule(0, 90, "cosine")) - 0.5) <= 1e-12


@pytest.mark.parametrize("kind", ["cubic", "linear", "cosine"])
def test_monotone_and_in_range(kind):
    sched = Schedule(t_i=3, t_f=47, kind=kind)
    ts = np.linspace(0, 60, 2000)
    values = [delta(t, sched) for t in ts]
    assert all(0.0 <= v <= 1.0 for v in values)
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_cubic_dominates_linear_dominates_cosine_on_first_half():
    t_i, t_f = 0, 90
    cubic = Schedule(t_i, t_f, "cubic")
    linear = Schedule(t_i, t_f, "linear")
    cosine = Schedule(t_i, t_f, "cosine")
    for t in np.linspace(t_i, (t_i + t_f) / 2, 500):
        c, l, s = delta(t, cubic), delta(t, linear), delta(t, cosine)
        assert c + 1e-12 >= l
        assert l + 1e-12 >= s


def test_normalized_shift_scale_invariance():
    # delta depends only on (t - t_i) / (t_f - t_i)
    for kind in ("cubic", "linear", "cosine"):
        a = Schedule(0, 10, kind)
        b = Schedule(100, 200, kind)
        for frac in np.linspace(0, 1, 51):
            assert delta(10 * frac, a) == pytest.approx(delta(100 + 100 * frac, b), abs=1e-12)


def test_negative_epoch_rejected():
    with pytest.raises(ValueError):
        delta(-1, Schedule(0, 10))
