from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nestkrylov.krylov import fgmres_restarted
from nestkrylov.nesting import (
    VARIANTS,
    F3rConfig,
    Fgmres,
    PrimaryPrecond,
    Richardson,
    SolverSpec,
    SpecError,
    build,
    build_f3r,
    resolve_spec,
)
from nestkrylov.precision import Precision
from nestkrylov.precond import IluConfig, factorize
from nestkrylov.sparse import CsrMatrix

from conftest import random_well_conditioned

P16, P32, P64 = Precision.P16, Precision.P32, Precision.P64
precisions = st.sampled_from([P64, P32, P16])


@st.composite
def specs(draw):
    depth = draw(st.integers(1, 4))
    levels = []
    mat = vec = P64
    for d in range(depth):
        mat = draw(st.sampled_from([p for p in Precision if p <= mat]))
        vec = draw(st.sampled_from([p for p in Precision if p <= vec]))
        m = draw(st.integers(1, 200))
        if d and draw(st.booleans()):
            c = draw(st.one_of(st.none(), st.integers(1, 500)))
            omega = draw(st.sampled_from([1.0, 0.5, 1.25]))
            levels.append(Richardson(m, mat, vec, c, omega))
        else:
            levels.append(Fgmres(m, mat, vec))
    kind = draw(st.sampled_from(["ilu0", "ic0", "identity"]))
    if kind == "identity":
        prim = PrimaryPrecond("identity")
    else:
        prim = PrimaryPrecond(kind, draw(st.one_of(st.none(), st.integers(1, 64))),
                              draw(st.one_of(st.none(), st.sampled_from([1.0, 1.1, 2.0]))), draw(precisions))
    return SolverSpec(tuple(levels), prim)


@given(specs())
def test_spec_string_round_trip(spec):
    assert SolverSpec.parse(str(spec)) == spec


def test_parse_example():
    s = SolverSpec.parse("F100:f64/f64 > F8:f32/f32 > F4:f16/f32 > R2:f16,c=64 > ilu0(blocks=8,alpha=1.0,prec=f16)")
    assert s.levels == (Fgmres(100), Fgmres(8, P32, P32), Fgmres(4, P16, P32), Richardson(2, P16, P16, 64))
    assert s.primary == PrimaryPrecond("ilu0", 8, 1.0, P16)
    assert s.depth == 4


def test_fixed_weight_syntax():
    assert SolverSpec.parse("F2 > R3:f32,omega=0.8 > identity").levels[1].c is None
    assert SolverSpec.parse("F2 > R3:f32,c=inf > identity").levels[1].c is None
    assert SolverSpec.parse("F2 > R3:f32,c=4,omega=0.8 > identity").levels[1].c == 4


@pytest.mark.parametrize("text,token", [
    ("F100:f64 > X3 > ilu0", "X3"),
    ("F100:f64 > F8:f8 > ilu0", "F8:f8"),
    ("F100:f64 > R2:f32,q=1 > ilu0", "R2:f32,q=1"),
    ("F100:f64 > ilu0(blocks=x)", "ilu0(blocks=x)"),
    ("F100:f64 > ilu0(beta=1)", "beta"),
    ("R2:f64 > ilu0", "R2:f64/f64,c=64"),
    ("F10:f32 > F5:f64 > ilu0", "F5:f64/f64"),
    ("F10:f64", "F10:f64"),
])
def test_spec_errors_name_the_token(text, token):
    with pytest.raises(SpecError) as exc:
        SolverSpec.parse(text)
    assert exc.value.token == token
    assert repr(token) in str(exc.value)


def test_increasing_precision_allowed_on_request():
    s = SolverSpec.parse("F10:f32 > F5:f64 > identity", allow_increasing=True)
    assert s.levels[1].matrix is P64


def test_variants_parse_and_f3r_schedule():
    for name, text in VARIANTS.items():
        SolverSpec.parse(text)
    for mode in (P64, P32, P16):
        spec = F3rConfig(mode=mode).spec(PrimaryPrecond("ilu0"))
        assert str(spec).split(" > ")[:4] == VARIANTS[f"fp{mode.value}-F3R"].split(" > ")[:4]
        assert spec.primary.precision == spec.levels[-1].matrix


def test_resolve_spec_fills_open_fields():
    s = resolve_spec("fp16-F3R", kind="ic0", blocks=4, alpha=1.0)
    assert s.primary == PrimaryPrecond("ic0", 4, 1.0, P16)
    s = resolve_spec("F10 > ilu0(blocks=2)", kind="ic0", blocks=4, alpha=1.5)
    assert s.primary == PrimaryPrecond("ilu0", 2, 1.5, P64)


# --- execution ---------------------------------------------------------------------


@pytest.fixture
def small(rng):
    M = random_well_conditioned(rng, 30)
    return CsrMatrix.from_dense(M), rng.standard_normal(30)


def test_single_level_matches_restarted_fgmres(small):
    A, b = small
    M = factorize(A, IluConfig(nblocks=3))
    solver = build("F7:f64 > ilu0(blocks=3)", A, M, max_cycles=1)
    x, rep = solver.solve(b, 1e-12)
    x_ref, ref = fgmres_restarted(A, M.apply, b, m=7, tol=1e-12, max_restarts=1)
    assert np.array_equal(x, x_ref)
    assert rep.precond_invocations == ref.precond_invocations == 7
    assert rep.residual_history == ref.residual_history


def test_two_level_product_rule(small):
    A, b = small
    solver = build("F4:f64 > F2:f64 > identity", A, max_cycles=1)
    _, rep = solver.solve(b, 1e-14)
    assert rep.outer_iterations == 4
    assert rep.precond_invocations == 8
    assert rep.level_invocations == [1, 4, 8]


def test_richardson_with_exact_preconditioner_converges_in_one_step(rng):
    blocks = [random_well_conditioned(rng, 5) for _ in range(3)]
    dense = np.zeros((15, 15))
    for k, blk in enumerate(blocks):
        dense[5 * k:5 * k + 5, 5 * k:5 * k + 5] = blk
    A = CsrMatrix.from_dense(dense)
    solver = build("F1:f64 > R1:f64,c=inf > ilu0(blocks=3)", A)
    _, rep = solver.solve(rng.standard_normal(15))
    assert rep.converged and rep.outer_iterations == 1 and rep.precond_invocations == 1


def test_f3r_counts_and_ratios(hpcg444):
    A, b, _ = hpcg444
    cfg = F3rConfig(mode=P64, m1=3, max_cycles=1)
    _, rep = build_f3r(cfg, A, factorize(A, IluConfig(4, symmetric=True)), kind="ic0").solve(b, 1e-30)
    inv = rep.level_invocations
    assert inv[0] == 1 and inv[1] == 3
    assert [inv[2] // inv[1], inv[3] // inv[2], inv[4] // inv[3]] == [8, 4, 2]
    assert all(inv[d + 1] == m * inv[d] for d, m in zip(range(1, 4), (8, 4, 2)))
    assert rep.precond_invocations == 3 * 64


def test_richardson_one_with_fixed_unit_weight_is_transparent(hpcg444):
    A, b, _ = hpcg444
    M = factorize(A, IluConfig(4, symmetric=True))
    x1, r1 = build("F100 > F8 > F4 > R1:f64,c=inf > ic0", A, M).solve(b)
    x2, r2 = build("F100 > F8 > F4 > ic0", A, M).solve(b)
    assert np.array_equal(x1, x2)
    assert r1.residual_history == r2.residual_history


def test_outer_cap_counts_cycles(hpcg444):
    A, b, _ = hpcg444
    cfg = F3rConfig(mode=P64, m1=2, m2=2, m3=2, m4=1)
    _, rep = build_f3r(cfg, A, factorize(A, IluConfig(4, symmetric=True))).solve(b, 1e-30)
    assert not rep.converged and rep.reason == "max iterations"
    assert rep.outer_iterations == 6 and len(rep.cycle_histories) == 3
    assert len(rep.residual_history) == rep.outer_iterations + 1
    assert F3rConfig().m1 * F3rConfig().max_cycles == 300


def test_deterministic_reports(hpcg444):
    A, b, _ = hpcg444
    solver = build_f3r(F3rConfig(mode=P16, m1=5, max_cycles=1), A, factorize(A, IluConfig(4, symmetric=True)))
    x1, r1 = solver.solve(b, 1e-30)
    x2, r2 = solver.solve(b, 1e-30)
    assert np.array_equal(x1, x2)
    d1, d2 = r1.to_dict(), r2.to_dict()
    d1.pop("wall_seconds"), d2.pop("wall_seconds")
    assert d1 == d2


def test_zero_rhs(small):
    A, _ = small
    x, rep = build("F4 > F2 > identity", A).solve(np.zeros(30))
    assert rep.converged and rep.outer_iterations == 0 and not x.any()
    assert rep.residual_history == [0.0]


def test_weights_persist_across_restarts_unless_reset(hpcg444):
    A, b, _ = hpcg444
    M = factorize(A, IluConfig(4, symmetric=True))
    spec = "F2 > F2 > R2:f64,c=1 > ic0"
    keep = build(spec, A, M, max_cycles=2)
    _, rk = keep.solve(b, 1e-30)
    reset = build(spec, A, M, max_cycles=2, reset_weights_on_restart=True)
    _, rr = reset.solve(b, 1e-30)
    assert keep.richardson_states[0].c_ntr == 9
    assert reset.richardson_states[0].c_ntr == 5
    assert rk.omegas_final != rr.omegas_final


def test_inner_divergence_is_reported():
    A = CsrMatrix.from_dense(np.diag([1e6, 2e6, 3e6]))
    _, rep = build("F3:f64 > F2:f16 > identity", A).solve(np.ones(3))
    assert not rep.converged and "inner divergence at level 2" in rep.reason


def test_rhs_shape_checked(small):
    A, _ = small
    with pytest.raises(ValueError):
        build("F2 > identity", A).solve(np.ones(3))
