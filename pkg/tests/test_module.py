import copy

import numpy as np
import pytest

from probmod import tensor as T
from probmod.distributions import Categorical, HalfNormal, Normal
from probmod.module import (
    NameCollisionError,
    PModule,
    StaleLedgerError,
    named_parameters,
    parameters,
    pq_terms,
    sample,
    set_posteriors,
)
from probmod.posterior import Normal as NormalPosterior
from probmod.posterior import PointMass
from probmod.random import RngState, manual_seed, randn, using_rng
from probmod.tensor import Parameter, Tensor

from _models import Conjugate, Regression, Y_CONJ
from _oracles import finite_diff, relative_error


class Branchy(PModule):
    def forward(self, x):
        if randn(1).item() > 0:
            self.weight = Normal(-1.0, 1.0)
        else:
            self.weight = Normal(1.0, 10.0)
        return x * T.exp(self.weight)


class InitDeclared(PModule):
    def __init__(self):
        super().__init__()
        self.w = Normal(np.zeros(3), 1.0)

    def forward(self, x):
        return x * self.w


class Pair(PModule):
    def __init__(self):
        super().__init__()
        self.left = InitDeclared()
        self.right = InitDeclared()

    def forward(self, x):
        return self.left(x) + self.right(x)


def test_attribute_read_returns_value_tensor():
    manual_seed(0)
    m = PModule()
    m.weights = Normal(0.0, 1.0)
    assert isinstance(m.weights, Tensor) and np.isfinite(m.weights.data).all()
    assert m.rv("weights").prior.family == "Normal"


def test_name_collisions():
    m = PModule()
    m.sub = PModule()
    with pytest.raises(NameCollisionError):
        m.sub = Normal(0.0, 1.0)
    m.p = Parameter(np.zeros(2))
    with pytest.raises(NameCollisionError):
        m.p = Normal(0.0, 1.0)
    m.z = Normal(0.0, 1.0)
    with pytest.raises(NameCollisionError):
        m.z = PModule()
    with pytest.raises(NameCollisionError):
        m.z = 3.0


def test_branch_ledger_and_guides():
    manual_seed(1)
    m = Branchy()
    seen = set()
    for _ in range(1000):
        m(Tensor(1.0))
        ledger = m.ledger()
        assert ledger == ["weight"]
        seen.add(m.rv("weight").prior.identity())
        if len(seen) == 2:
            break
    assert len(m.posterior.guides) == 2
    n_params = len(m.parameters())
    for _ in range(1000):
        m(Tensor(1.0))
        assert m.ledger().count("weight") == 1
    assert len(m.parameters()) == n_params == 4


def test_reassignment_keeps_one_guide():
    manual_seed(2)
    m = Conjugate()
    m()
    count = len(m.parameters())
    m()
    assert len(m.parameters()) == count == 2


def test_observe_exactness_over_passes():
    manual_seed(3)
    x = np.linspace(-1, 1, 5)
    y0 = np.array([0.3, -1.2, 2.5, 0.0, 1.1])
    m = Regression()
    m.observe(y=y0)
    for _ in range(100):
        sample(m)
        out = m(x)
        assert out.data.tobytes() == y0.tobytes()
    m.observe(None)
    for _ in range(100):
        out = m(x)
        assert not np.array_equal(out.data, y0)


def test_latest_observation_wins():
    m = Regression()
    m.observe(y=np.ones(2))
    m.observe(y=np.zeros(2))
    assert (m(np.ones(2)).data == 0.0).all()


def test_observation_before_existence_and_diagnostic():
    manual_seed(4)
    m = Pair()
    m.observe({"left.w": np.ones(3), "nothing": 1.0})
    m(np.ones(3))
    assert (m.left.w.data == 1.0).all()
    assert m.unmatched_observations() == ["nothing"]


def test_dotted_observe_on_existing_variable():
    m = Pair()
    m.observe({"right.w": np.full(3, 2.0)})
    assert m.right.rv("w").observed
    np.testing.assert_array_equal(m.right.w.data, [2.0, 2.0, 2.0])


def test_sample_semantics():
    manual_seed(5)
    m = InitDeclared()
    x = np.ones(3)
    a, b = m(x).data, m(x).data
    assert a.tobytes() == b.tobytes()
    sample(m)
    assert not np.array_equal(m(x).data, a)


def test_sample_on_subtree_is_restriction():
    manual_seed(6)
    m = Pair()
    left, right = m.left.w.data.copy(), m.right.w.data.copy()
    sample(m.left)
    assert not np.array_equal(m.left.w.data, left)
    assert m.right.w.data.tobytes() == right.tobytes()
    sample(m)
    assert not np.array_equal(m.right.w.data, right)


def test_sample_without_variables_is_noop():
    m = PModule()
    m.p = Parameter(np.ones(2))
    sample(m)
    np.testing.assert_array_equal(m.p.data, [1.0, 1.0])


def test_pq_terms_examples():
    m = Conjugate(posterior=PointMass())
    m.observe(y=np.zeros(3))
    m()
    m.rv("mu").guide.params["value"].data = np.zeros(())
    m()
    terms = pq_terms(m)
    assert [t.scope for t in terms] == m.ledger() == ["mu", "y"]
    mu, y = terms
    assert mu.log_p.item() == pytest.approx(-0.9189385, abs=1e-7) and mu.log_q.item() == 0.0
    assert y.observed and y.log_p.item() == pytest.approx(3 * -0.9189385, abs=1e-6)


def test_pq_terms_before_pass():
    with pytest.raises(StaleLedgerError):
        pq_terms(Conjugate())


def test_parameter_counts():
    manual_seed(7)
    m = Conjugate(posterior=NormalPosterior())
    m.observe(y=Y_CONJ)
    m()
    assert len(parameters(m)) == 2
    assert sorted(n for n, _ in named_parameters(m)) == ["mu.loc", "mu.log_scale"]
    p = Conjugate(posterior=PointMass())
    p.observe(y=Y_CONJ)
    p()
    assert len(p.parameters()) == 1
    assert PModule().parameters() == []


def test_parameters_deduplicated():
    shared = Parameter(np.zeros(2))
    m = PModule()
    m.a = PModule()
    m.b = PModule()
    m.a.w = shared
    m.b.w = shared
    assert len(m.parameters()) == 1


def test_apply_identity_and_children_first():
    m = Pair()
    count = len(m.parameters())
    order = []
    m.apply(lambda mod: order.append(mod.scope))
    assert order == ["left", "right", ""]
    assert len(m.parameters()) == count


def test_set_posteriors_pointmass_preserves_values():
    manual_seed(8)
    m = Conjugate(posterior=NormalPosterior())
    m.observe(y=Y_CONJ)
    m()
    before = m.mu.data.copy()
    m.apply(set_posteriors(PointMass))
    assert m.mu.data.tobytes() == before.tobytes()
    m()
    assert m.mu.data.tobytes() == before.tobytes()
    assert all(t.log_q.item() == 0.0 for t in pq_terms(m))


def test_sibling_scopes_are_distinct():
    m = Pair()
    assert m.left.rv("w").scope == "left.w" and m.right.rv("w").scope == "right.w"
    names = [n for n, _ in m.named_parameters()]
    assert len(names) == len(set(names)) == 4
    assert {id(p) for p in m.left.parameters()}.isdisjoint({id(p) for p in m.right.parameters()})


def test_dynamic_head_has_no_parameters():
    class Head(PModule):
        def __init__(self):
            super().__init__()
            self.w = Parameter(np.ones((2, 2)))

        def forward(self, x):
            self.c = Categorical(logits=T.as_tensor(x) @ self.w)
            return self.c

    m = Head()
    m(np.ones((1, 2)))
    count = len(m.parameters())
    m(np.zeros((1, 2)))
    assert len(m.parameters()) == count == 1


def test_pq_terms_gradient_matches_finite_differences():
    manual_seed(9)
    m = Regression(posterior=NormalPosterior(log_scale=-1.0))
    x = np.linspace(-1, 1, 4)
    m.observe(y=np.array([-1.0, 0.2, 0.9, 2.1]))
    m(x)
    named = named_parameters(m)

    def objective(arrays):
        for (_, p), a in zip(named, arrays):
            p.data = a.copy()
        with using_rng(RngState(42)):
            m(x)
        return float(sum((t.log_p - t.log_q).item() for t in pq_terms(m)))

    start = [p.data.copy() for _, p in named]
    numeric = finite_diff(objective, start)
    for (_, p), a in zip(named, start):
        p.data = a.copy()
    with using_rng(RngState(42)):
        m(x)
    m.zero_grad()
    total = None
    for t in pq_terms(m):
        total = t.log_p - t.log_q if total is None else total + (t.log_p - t.log_q)
    total.backward()
    for (name, p), g in zip(named, numeric):
        assert relative_error(p.grad.data, g) < 1e-4, name


def test_deepcopy_gives_independent_parameters():
    m = Pair()
    c = copy.deepcopy(m)
    c.left.rv("w").value.data[:] = 99.0
    assert not (m.left.w.data == 99.0).any()
    assert {id(p) for p in c.parameters()}.isdisjoint({id(p) for p in m.parameters()})


def test_half_normal_latent_values_positive():
    manual_seed(10)
    m = PModule()
    for _ in range(50):
        m.s = HalfNormal(1.0)
        sample(m)
        assert m.s.item() > 0
