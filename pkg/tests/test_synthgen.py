import datetime as dt

import numpy as np
import pytest

from tvbarc.synthgen import GeneratorSpec, PiecewiseLinear, Sinusoid, curve_from_dict, simulate


def test_p0_sample_mean():
    s = simulate(GeneratorSpec(10_000, 0, PiecewiseLinear.constant(5.0), seed=1))
    assert s.T == 10_000
    assert abs(s.values.mean() - 5) < 3 * np.sqrt(5 / 10_000)


def test_stationary_mean_ar1():
    spec = GeneratorSpec(20_000, 1, PiecewiseLinear.constant(2.0), (PiecewiseLinear.constant(0.5),), seed=2)
    m = simulate(spec).values.mean()
    assert m == pytest.approx(4.0, rel=0.05)


def test_lag_slope_recovers_coefficient():
    spec = GeneratorSpec(20_000, 1, PiecewiseLinear.constant(3.0), (PiecewiseLinear.constant(0.4),), seed=3)
    x = simulate(spec).values.astype(float)
    slope = np.polyfit(x[:-1], x[1:], 1)[0]
    assert abs(slope - 0.4) < 0.05


def test_deterministic_and_seed_sensitive():
    mk = lambda seed: GeneratorSpec(200, 2, Sinusoid(10, 3),
                                    (PiecewiseLinear.constant(0.3), PiecewiseLinear(((0, 0.1), (1, 0.4)))),
                                    seed=seed)
    assert simulate(mk(5)) == simulate(mk(5))
    assert simulate(mk(5)).counts != simulate(mk(6)).counts


def test_outputs_nonnegative_ints_and_dates():
    s = simulate(GeneratorSpec(30, 1, PiecewiseLinear.constant(1.0), (PiecewiseLinear.constant(0.2),),
                               start_date=dt.date(2021, 3, 1)))
    assert all(isinstance(c, int) and c >= 0 for c in s.counts)
    assert s.start_date == dt.date(2021, 3, 1)


@pytest.mark.parametrize(
    "mu, ar",
    [
        (PiecewiseLinear.constant(0.0), ()),
        (Sinusoid(1.0, 2.0), ()),
        (PiecewiseLinear.constant(1.0), (PiecewiseLinear.constant(1.0),)),
        (PiecewiseLinear.constant(1.0), (PiecewiseLinear.constant(-0.1),)),
        (PiecewiseLinear.constant(1.0), (PiecewiseLinear.constant(0.6), PiecewiseLinear.constant(0.5))),
    ],
)
def test_inadmissible_rejected(mu, ar):
    with pytest.raises(ValueError):
        GeneratorSpec(10, len(ar), mu, ar)


def test_wrong_number_of_curves():
    with pytest.raises(ValueError):
        GeneratorSpec(10, 2, PiecewiseLinear.constant(1.0), (PiecewiseLinear.constant(0.2),))


def test_piecewise_linear_values():
    f = PiecewiseLinear(((0, 20), (0.45, 20), (1, 40)))
    assert f(0.2) == 20
    assert f(1.0) == 40
    assert f(0.725) == pytest.approx(30)
    with pytest.raises(ValueError):
        PiecewiseLinear(((0.5, 1), (0.2, 2)))


def test_json_round_trip(tmp_path):
    spec = GeneratorSpec(50, 1, Sinusoid(8, 2, phase=0.3), (PiecewiseLinear(((0, 0.2), (1, 0.6))),), seed=9)
    spec.dump(tmp_path / "g.json")
    back = GeneratorSpec.load(tmp_path / "g.json")
    assert back.to_dict() == spec.to_dict()
    assert simulate(back) == simulate(spec)
    assert curve_from_dict({"kind": "constant", "value": 3})(0.5) == 3
    with pytest.raises(ValueError):
        curve_from_dict({"kind": "spline"})
