import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tegsim.errors import CapacityError, DegeneracyError, IntegrationError, ShapeError
from tegsim.lindblad import (
    GeneratorSpec,
    LindbladTerm,
    adjoint_apply,
    adjoint_liouvillian,
    anticommutator,
    apply_generator,
    build_fermion_register,
    check_density_matrix,
    evolve,
    grand_canonical_state,
    liouvillian,
    operator_from_json,
    operator_to_json,
    product_state,
    spectral_gap,
    steady_state,
    trace_distance,
)

from conftest import SIGMA_MINUS, random_density, random_generator, random_hermitian, thermal_qubit

seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


# ---- fermionic register

def test_single_mode_lowering_operator():
    reg = build_fermion_register(1)
    assert np.array_equal(reg.lowering[0], SIGMA_MINUS)


@pytest.mark.parametrize("n", range(1, 7))
def test_car_relations(n):
    reg = build_fermion_register(n)
    eye = np.eye(reg.dim)
    for i in range(n):
        ai = reg.lowering[i]
        for j in range(n):
            aj = reg.lowering[j]
            assert np.max(np.abs(anticommutator(ai, aj.conj().T) - (i == j) * eye)) <= 1e-12
            assert np.max(np.abs(anticommutator(ai, aj))) <= 1e-12
        assert set(np.round(np.linalg.eigvalsh(reg.number(i)), 12)) <= {0.0, 1.0}


def test_two_mode_anticommutator_exactly_zero():
    a1, a2 = build_fermion_register(2).lowering
    assert not np.any(a1 @ a2 + a2 @ a1)


def test_three_modes_have_dimension_eight():
    assert build_fermion_register(3).dim == 8


@pytest.mark.parametrize("n", [0, 13, -1, 2.5])
def test_register_capacity(n):
    with pytest.raises(CapacityError):
        build_fermion_register(n)


def test_number_operators_are_diagonal_in_occupation_basis():
    reg = build_fermion_register(3)
    bits = reg.occupation_basis()
    for i in range(3):
        assert np.allclose(np.diag(reg.number(i)).real, bits[:, i])


# ---- generator action

@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(min_value=1, max_value=4))
def test_generator_output_traceless_and_hermitian(seed, d):
    rng = np.random.default_rng(seed)
    gen = random_generator(rng, d)
    out = apply_generator(gen, random_density(rng, d))
    scale = max(1.0, np.max(np.abs(out)))
    assert abs(np.trace(out)) <= 1e-12 * scale
    assert np.max(np.abs(out - out.conj().T)) <= 1e-12 * scale


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(min_value=1, max_value=4))
def test_adjoint_duality(seed, d):
    rng = np.random.default_rng(seed)
    gen = random_generator(rng, d)
    rho, x = random_density(rng, d), random_hermitian(rng, d)
    lhs = np.trace(apply_generator(gen, rho) @ x)
    rhs = np.trace(rho @ adjoint_apply(gen, x))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_superoperators_match_direct_application(seed):
    rng = np.random.default_rng(seed)
    gen = random_generator(rng, 3)
    rho, x = random_density(rng, 3), random_hermitian(rng, 3)
    assert np.allclose((liouvillian(gen) @ rho.reshape(-1)).reshape(3, 3), apply_generator(gen, rho))
    assert np.allclose((adjoint_liouvillian(gen) @ x.reshape(-1)).reshape(3, 3), adjoint_apply(gen, x))


def test_adjoint_annihilates_identity(rng):
    gen = random_generator(rng, 4)
    assert np.max(np.abs(adjoint_apply(gen, np.eye(4)))) <= 1e-12


def test_unitary_stationary_state_gives_zero():
    h = np.diag([0.0, 1.0, 3.0])
    rho = np.diag([0.5, 0.3, 0.2])
    assert not np.any(apply_generator(GeneratorSpec(h), rho))


def test_decay_of_excited_qubit():
    gamma = 0.7
    gen = GeneratorSpec(np.zeros((2, 2)), (LindbladTerm(SIGMA_MINUS, gamma),))
    out = apply_generator(gen, np.diag([0.0, 1.0]))
    # hand evaluation: d rho_11/dt = -gamma, d rho_00/dt = +gamma
    assert out[1, 1] == pytest.approx(-gamma)
    assert out[0, 0] == pytest.approx(gamma)


def test_adjoint_of_sigma_z_under_decay():
    gamma = 0.4
    gen = GeneratorSpec(np.zeros((2, 2)), (LindbladTerm(SIGMA_MINUS, gamma),))
    sz = np.diag([1.0, -1.0])
    # s+ sz s- - 1/2{s+s-, sz} with s+s- = |1><1|: gives 2 gamma |1><1|
    assert np.allclose(adjoint_apply(gen, sz), np.diag([0.0, 2 * gamma]))


def test_shape_mismatch_rejected():
    gen = GeneratorSpec(np.eye(2))
    with pytest.raises(ShapeError):
        apply_generator(gen, np.eye(3) / 3)
    with pytest.raises(ShapeError):
        GeneratorSpec(np.eye(2), (LindbladTerm(np.eye(3), 1.0),))


def test_negative_rate_rejected():
    with pytest.raises(ValueError):
        LindbladTerm(SIGMA_MINUS, -0.1)


def test_non_hermitian_hamiltonian_rejected():
    with pytest.raises(ValueError):
        GeneratorSpec(SIGMA_MINUS)


def test_nonfinite_operator_rejected():
    with pytest.raises(ValueError):
        GeneratorSpec(np.array([[np.nan, 0], [0, 1]]))


# ---- steady states

def test_gibbs_qubit_steady_state():
    delta, temp = 1.0, 0.5
    rho = steady_state(thermal_qubit(delta, temp))
    w = math.exp(-delta / temp)
    assert np.allclose(rho, np.diag([1.0, w]) / (1 + w), atol=1e-12)


def test_unitary_generator_is_degenerate():
    with pytest.raises(DegeneracyError):
        steady_state(GeneratorSpec(np.diag([0.0, 1.0, 2.5])))


@settings(max_examples=20, deadline=None)
@given(seeds, st.integers(min_value=2, max_value=4))
def test_steady_state_residual(seed, d):
    gen = random_generator(np.random.default_rng(seed), d, n_terms=4)
    rho = steady_state(gen)
    check_density_matrix(rho)
    assert np.max(np.abs(apply_generator(gen, rho))) <= 1e-10


def test_steady_state_matches_long_time_evolution(rng):
    gen = random_generator(rng, 3, n_terms=4)
    gap = spectral_gap(gen)
    dt = 0.05 / max(1.0, np.max(np.abs(np.linalg.eigvals(liouvillian(gen)))))
    t_end = dt * math.ceil(30 / gap / dt)
    traj = evolve(gen, np.eye(3) / 3, (0.0, t_end), dt, store_every=1000)
    assert trace_distance(traj.states[-1], steady_state(gen)) <= 1e-6


# ---- evolution

def test_unitary_evolution_conserves_purity(rng):
    h = random_hermitian(rng, 3)
    h /= np.linalg.norm(h, 2)
    psi = rng.normal(size=3) + 1j * rng.normal(size=3)
    psi /= np.linalg.norm(psi)
    traj = evolve(GeneratorSpec(h), np.outer(psi, psi.conj()), (0.0, 5.0), 0.005, store_every=50)
    purity = [np.trace(r @ r).real for r in traj.states]
    assert np.max(np.abs(np.array(purity) - 1.0)) <= 1e-8


def test_detailed_balance_population_ratio():
    delta, temp = 1.0, 0.4
    gen = thermal_qubit(delta, temp, gamma=0.5)
    traj = evolve(gen, np.diag([0.0, 1.0]), (0.0, 80.0), 0.02, store_every=4000)
    p = np.diag(traj.states[-1]).real
    assert p[1] / p[0] == pytest.approx(math.exp(-delta / temp), abs=1e-6)


def test_stationary_start_stays_put():
    gen = thermal_qubit()
    rho = steady_state(gen)
    traj = evolve(gen, rho, (0.0, 5.0), 0.01)
    assert np.max(np.abs(traj.states - rho)) <= 1e-9


def test_time_dependent_generator_and_trace_hygiene(rng):
    base = random_generator(rng, 3)
    drive = random_hermitian(rng, 3)

    def gen_of_t(t):
        return GeneratorSpec(base.hamiltonian + math.sin(t) * drive, base.terms)

    traj = evolve(gen_of_t, random_density(rng, 3), (0.0, 4.0), 0.005, store_every=10)
    for rho in traj.states:
        assert abs(np.trace(rho) - 1) <= 1e-10
        assert np.linalg.eigvalsh(rho)[0] >= -1e-6


def test_evolve_raises_with_offending_time():
    gen = GeneratorSpec(np.zeros((2, 2)), (LindbladTerm(SIGMA_MINUS, 50.0),))
    with pytest.raises(IntegrationError) as info:
        evolve(gen, np.diag([0.0, 1.0]), (0.0, 1.0), 0.1)
    assert info.value.time is not None and info.value.time > 0


def test_evolve_rejects_invalid_state():
    with pytest.raises(ValueError):
        evolve(thermal_qubit(), np.diag([1.0, 1.0]), (0.0, 1.0), 0.1)


# ---- grand canonical states

def test_grand_canonical_occupations():
    reg = build_fermion_register(2)
    rho = grand_canonical_state([(0.0, 0), (0.5, 1)], 0.25, 0.1, reg)
    occ = [np.trace(rho @ reg.number(i)).real for i in range(2)]
    # 1 / (exp(-2.5) + 1) and 1 / (exp(2.5) + 1)
    assert occ == pytest.approx([0.9241418199787566, 0.07585818002124355], abs=1e-12)


def test_grand_canonical_half_filling_and_cold_limit():
    reg = build_fermion_register(1)
    rho = grand_canonical_state([(0.3, 0)], 0.3, 0.2, reg)
    assert np.trace(rho @ reg.number(0)).real == pytest.approx(0.5, abs=1e-12)
    rho = grand_canonical_state([(-1.0, 0)], 0.0, 1e-3, reg)
    assert np.trace(rho @ reg.number(0)).real >= 1 - 1e-9


def test_grand_canonical_extreme_ratio_does_not_overflow():
    reg = build_fermion_register(2)
    rho = grand_canonical_state([(0.0, 0), (1e4, 1)], 0.0, 1e-3, reg)
    check_density_matrix(rho)


def test_grand_canonical_matches_matrix_exponential():
    from scipy.linalg import expm
    reg = build_fermion_register(3)
    levels = [(0.1, 0), (-0.2, 1), (0.4, 2)]
    mu, temp = 0.05, 0.3
    h = sum(e * reg.number(i) for e, i in levels)
    w = expm(-(h - mu * reg.total_number()) / temp)
    assert np.allclose(grand_canonical_state(levels, mu, temp, reg), w / np.trace(w), atol=1e-12)


def test_product_state_trace_and_validation():
    reg = build_fermion_register(2)
    assert np.trace(product_state(reg, [0.2, 0.7])) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        product_state(reg, [1.2, 0.0])


# ---- serialization

def test_operator_json_round_trip(rng):
    op = random_hermitian(rng, 3)
    data = json.loads(json.dumps(operator_to_json(op)))
    assert data["dim"] == 3 and len(data["entries"]) == 9
    assert data["entries"][1] == [op[0, 1].real, op[0, 1].imag]
    assert np.array_equal(operator_from_json(data), op)
