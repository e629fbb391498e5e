import json
import math

import numpy as np
import pytest

from ptchain.classical import (
    ClassicalState,
    Motion,
    SectionConfig,
    classify_trajectory,
    complex_energy,
    equations_of_motion,
    first_order_matrix,
    fit_growth_rate,
    integrate,
    mode_decompose,
    poincare_section,
    rk4_propagator,
    rk4_step,
)
from ptchain.core import ChainSpec, build_coupling_matrix, decoupling_transform, normal_modes
from ptchain.errors import (
    DegenerateModes,
    DimensionMismatch,
    InsufficientData,
    NoCrossings,
    StepTooLarge,
    UndersampledRecord,
)
from ptchain.phase import Phase, classify_phase

rng = np.random.default_rng(99)
RATE = math.sqrt(-0.5 + 0.5 * math.sqrt(2))

BROKEN_RUN = (ChainSpec.uniform_chain(2, 1.0), [-1 - 1j, -1 - 1j], [1 + 0.5j, 1 + 0.5j])
EXCEPTIONAL_RUN = (ChainSpec(2, (2, 1), 0.5), [-1 + 1j, -1 + 1j], [2 - 0.25j, 2 - 0.25j])
UNBROKEN_RUN_A = (ChainSpec(2, (3, 1), 0.5), [-1 + 1j, 2 - 2j], [1 + 0.5j, 1.5 + 1j])
UNBROKEN_RUN_B = (ChainSpec(2, (3, 1), 0.5), [1 + 2j, 2 + 0.25j], [-3 + 1j, 0.5 + 5j])


def random_state(n, t=0.0):
    return ClassicalState(t, rng.normal(size=n) + 1j * rng.normal(size=n),
                          rng.normal(size=n) + 1j * rng.normal(size=n))


def test_equations_of_motion():
    spec = ChainSpec(4, (0.5, 1.5, 2.0, 3.0), 0.4)
    st = random_state(4)
    m = np.asarray(build_coupling_matrix(spec))
    assert np.allclose(equations_of_motion(spec, st), -m @ st.x, atol=1e-15)
    free = ChainSpec(3, (1.0, 2.0, 3.0), 0.0)
    assert np.array_equal(equations_of_motion(free, ClassicalState(0, [1, 1, 1], [0, 0, 0])),
                          -np.array([1.0, 2.0, 3.0]))
    g = 0.7
    a = equations_of_motion(ChainSpec.uniform_chain(2, g), ClassicalState(0, [1 + 2j, 3 - 1j], [0, 0]))
    assert a[0] == -(1 + 2j) - 1j * g * (3 - 1j)
    with pytest.raises(DimensionMismatch):
        equations_of_motion(spec, random_state(3))


def test_equations_of_motion_mode_vector():
    spec = ChainSpec(3, (0.4, 1.2, 2.5), 0.2)
    ms = normal_modes(spec)
    v = decoupling_transform(spec, ms)
    a = equations_of_motion(spec, ClassicalState(0, v[:, 1], np.zeros(3)))
    assert np.allclose(a, -ms.nu_sq[1] * v[:, 1], atol=1e-12)


def test_rk4_propagator_matches_step():
    spec = ChainSpec(3, (0.4, 1.2, 2.5), 0.6)
    a = first_order_matrix(spec)
    y = rng.normal(size=6) + 1j * rng.normal(size=6)
    h = 0.05
    assert np.allclose(rk4_propagator(spec, h) @ y, rk4_step(lambda t, z: a @ z, 0.0, y, h),
                       rtol=1e-14, atol=1e-14)


def test_harmonic_oscillator():
    spec = ChainSpec(2, (2.0, 1.0), 0.0)
    rec = integrate(spec, ClassicalState(0, [1, 0], [0, 0]), 1e-3, 10.0, 0.1)
    assert abs(rec.x[-1, 0] - math.cos(math.sqrt(2) * 10)) <= 1e-8
    assert np.allclose(rec.times, np.arange(101) * 0.1)


def test_mode_decompose_single_mode():
    spec = ChainSpec(3, (0.4, 1.2, 2.5), 0.2)
    ms = normal_modes(spec)
    v = decoupling_transform(spec, ms)
    k = 2
    amp = mode_decompose(spec, ClassicalState(0, v[:, k], 1j * ms.nu[k] * v[:, k]))
    expected = np.zeros(3)
    expected[k] = 1
    assert np.allclose(amp.c_plus, expected, atol=1e-12)
    assert np.allclose(amp.c_minus, 0, atol=1e-12)


def test_mode_decompose_reconstructs_init():
    for _ in range(50):
        n = int(rng.integers(2, 6))
        spec = ChainSpec(n, tuple(rng.uniform(0.3, 3, n)), rng.uniform(-1, 1))
        init = random_state(n, t=rng.uniform(-5, 5))
        amp = mode_decompose(spec, init)
        x, v = amp.evaluate(init.t)
        assert np.max(np.abs(x[0] - init.x)) <= 1e-10
        assert np.max(np.abs(v[0] - init.v)) <= 1e-10


def test_mode_decompose_refuses_exceptional():
    spec, x0, v0 = EXCEPTIONAL_RUN
    with pytest.raises(DegenerateModes):
        mode_decompose(spec, ClassicalState(0, x0, v0))


def sup_relative_error(rec, amp):
    x_exact, _ = amp.evaluate(rec.times)
    scale = 1.0 + np.maximum.accumulate(np.max(np.abs(x_exact), axis=1))
    return float(np.max(np.max(np.abs(rec.x - x_exact), axis=1) / scale))


def test_integrator_matches_modes_random():
    done = 0
    while done < 100:
        n = int(rng.integers(2, 6))
        spec = ChainSpec(n, tuple(rng.uniform(0.3, 3, n)), rng.uniform(-0.8, 0.8))
        lam = normal_modes(spec).nu_sq
        if np.min(np.abs(lam[:, None] - lam[None, :]) + np.eye(n)) < 1e-3:
            continue
        init = random_state(n)
        rec = integrate(spec, init, 1e-3, 50.0, 0.1)
        assert sup_relative_error(rec, mode_decompose(spec, init)) <= 1e-6
        assert np.max(rec.energy_drift()) <= (1e-8 if rec.bounded_contract else 1e-6)
        done += 1


def test_convergence_order():
    spec, x0, v0 = UNBROKEN_RUN_A
    init = ClassicalState(0, x0, v0)
    x_exact = mode_decompose(spec, init).evaluate(20.0)[0][0]
    errs = []
    for dt in (0.04, 0.02):
        y = np.concatenate([init.x, init.v])
        step = rk4_propagator(spec, dt)
        for _ in range(int(round(20.0 / dt))):
            y = step @ y
        errs.append(np.max(np.abs(y[:2] - x_exact)))
    assert 14 < errs[0] / errs[1] < 18


def test_unbroken_runs_bounded_and_energy():
    for spec, x0, v0 in (UNBROKEN_RUN_A, UNBROKEN_RUN_B):
        init = ClassicalState(0, x0, v0)
        rec = integrate(spec, init, 1e-3, 200.0, 0.1)
        assert np.max(rec.energy_drift()) <= 1e-8
        amp = mode_decompose(spec, init)
        bound = np.linalg.norm(amp.transform, 2) * np.sum(np.abs(amp.c_plus) + np.abs(amp.c_minus))
        assert np.max(np.linalg.norm(rec.x, axis=1)) <= bound
        assert classify_trajectory(rec).kind == Motion.BOUNDED
        assert classify_trajectory(amp).kind == Motion.BOUNDED


def test_broken_run_grows():
    spec, x0, v0 = BROKEN_RUN
    init = ClassicalState(0, x0, v0)
    rec = integrate(spec, init, 1e-3, 100.0, 0.05)
    assert np.max(rec.energy_drift()) <= 1e-6
    fit = fit_growth_rate(rec, 20.0, 100.0)
    assert abs(fit.rate - RATE) <= 0.05 * RATE
    assert fit.interval[0] <= fit.rate <= fit.interval[1]
    # the running peak radius keeps growing after t = 20
    radius = np.linalg.norm(rec.x, axis=1)
    peaks = [radius[(rec.times >= a) & (rec.times < a + 10)].max() for a in range(20, 100, 10)]
    assert all(b > a for a, b in zip(peaks, peaks[1:]))
    amp_class = classify_trajectory(mode_decompose(spec, init))
    assert amp_class.kind == Motion.GROWING and abs(amp_class.rate - RATE) < 1e-12
    rec_class = classify_trajectory(rec)
    assert rec_class.kind == Motion.GROWING


def test_exceptional_run_secular():
    spec, x0, v0 = EXCEPTIONAL_RUN
    rec = integrate(spec, ClassicalState(0, x0, v0), 1e-3, 100.0, 0.1)
    assert classify_phase(spec).variant == Phase.EXCEPTIONAL
    assert classify_trajectory(rec).kind == Motion.SECULAR
    # linear, not exponential, envelope: peak radius over [80,100] vs [40,60] grows ~2x
    radius = np.linalg.norm(rec.x, axis=1)
    late = radius[rec.times >= 80].max()
    mid = radius[(rec.times >= 40) & (rec.times < 60)].max()
    assert 1.3 < late / mid < 3.0


def test_decaying_branch_from_amplitudes():
    spec = ChainSpec.uniform_chain(2, 1.0)
    ms = normal_modes(spec)
    v = decoupling_transform(spec, ms)
    k = int(np.argmax(ms.nu.imag))  # exp(i nu t) decays when Im nu > 0
    init = ClassicalState(0, v[:, k], 1j * ms.nu[k] * v[:, k])
    cls = classify_trajectory(mode_decompose(spec, init))
    assert cls.kind == Motion.DECAYING and abs(cls.rate - RATE) < 1e-12


def test_insufficient_data():
    spec, x0, v0 = UNBROKEN_RUN_A
    rec = integrate(spec, ClassicalState(0, x0, v0), 1e-2, 10.0, 0.1)
    with pytest.raises(InsufficientData):
        fit_growth_rate(rec)


def test_step_too_large():
    spec, x0, v0 = UNBROKEN_RUN_A
    with pytest.raises(StepTooLarge):
        integrate(spec, ClassicalState(0, x0, v0), 0.5, 50.0, 0.5)


def test_bad_integration_arguments():
    spec, x0, v0 = UNBROKEN_RUN_A
    with pytest.raises(ValueError):
        integrate(spec, ClassicalState(0, x0, v0), 0.1, 1.0, 0.01)


def test_boundedness_iff_unbroken():
    done = mismatches = 0
    while done < 200:
        n = int(rng.integers(2, 4))
        spec = ChainSpec(n, tuple(rng.uniform(0.3, 3, n)), rng.uniform(-0.6, 0.6))
        lam = normal_modes(spec).nu_sq
        sep = np.min(np.abs(lam[:, None] - lam[None, :]) + np.eye(n))
        im = np.abs(lam.imag)
        if sep < 1e-4 or np.any((im > 1e-12) & (im < 1e-4)):
            continue
        init = random_state(n)
        amp = mode_decompose(spec, init)
        if min(np.min(np.abs(amp.c_plus)), np.min(np.abs(amp.c_minus))) < 1e-12:
            continue
        bounded = classify_trajectory(amp).kind == Motion.BOUNDED
        mismatches += bounded != (classify_phase(spec).variant == Phase.UNBROKEN)
        done += 1
    assert mismatches == 0


def test_complex_energy_definition():
    spec = ChainSpec(3, (0.4, 1.2, 2.5), 0.2)
    st = random_state(3)
    m = np.asarray(build_coupling_matrix(spec))
    assert np.isclose(complex_energy(m, st.x, st.v), 0.5 * st.v @ st.v + 0.5 * st.x @ m @ st.x)


# -- Poincare sections -------------------------------------------------------------

def test_section_of_periodic_orbit():
    spec = ChainSpec(2, (2.0, 3.0), 0.0)
    rec = integrate(spec, ClassicalState(0, [1, 0.5], [0.3, 0]), 1e-3, 60.0, 0.05)
    cfg = SectionConfig(coord=0, part="re", level=0.0, direction=1,
                        projection=(("x", 0, "re"), ("v", 0, "re")))
    sec = poincare_section(rec, cfg)
    assert len(sec.points) >= 10
    assert np.max(np.abs(sec.points - sec.points[0])) <= 1e-6
    period = 2 * math.pi / math.sqrt(2)
    assert np.allclose(np.diff(sec.times), period, atol=1e-6)


def test_section_unbroken_bounded_box():
    spec = ChainSpec(2, (3, 1), 0.5)
    rec = integrate(spec, ClassicalState(0, [1 + 0.5j, -2 + 2j], [1 + 0.5j, -1.5 - 1.5j]),
                    1e-3, 500.0, 0.1)
    sec = poincare_section(rec)
    early = np.abs(sec.points[sec.times <= 100]).max(axis=0)
    late = np.abs(sec.points).max(axis=0)
    assert np.all(late <= early * 1.5)
    assert len(sec.points) > 50


def test_section_growing_run_escapes():
    spec, x0, v0 = BROKEN_RUN
    rec = integrate(spec, ClassicalState(0, x0, v0), 1e-3, 60.0, 0.05)
    sec = poincare_section(rec, SectionConfig(coord=0))
    r = np.linalg.norm(sec.points, axis=1)
    assert r[sec.times > 40].max() >= 2 * r[sec.times < 20].max()


def test_section_errors():
    spec, x0, v0 = UNBROKEN_RUN_A
    coarse = integrate(spec, ClassicalState(0, x0, v0), 0.01, 50.0, 1.0)
    with pytest.raises(UndersampledRecord):
        poincare_section(coarse)
    still = integrate(ChainSpec(2, (1, 1), 0.0), ClassicalState(0, [0, 1], [0, 0]), 0.01, 5.0, 0.1)
    with pytest.raises(NoCrossings):
        poincare_section(still, SectionConfig(coord=1, part="im"))


def test_serialisation(tmp_path):
    spec, x0, v0 = UNBROKEN_RUN_A
    rec = integrate(spec, ClassicalState(0, x0, v0), 1e-2, 20.0, 0.1)
    rec.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,x1_re,x1_im,x2_re,x2_im,v1_re,v1_im,v2_re,v2_im,H_re,H_im"
    assert len(lines) == 202
    row = lines[-1].split(",")
    assert float(row[1]) == rec.x[-1, 0].real and float(row[10]) == rec.energy[-1].imag
    rec.to_json(tmp_path / "t.json")
    data = json.loads((tmp_path / "t.json").read_text())
    assert data["x"][-1][0] == [rec.x[-1, 0].real, rec.x[-1, 0].imag]
    sec = poincare_section(rec, SectionConfig(coord=0))
    sec.to_csv(tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "t,re_x1,re_v1"
