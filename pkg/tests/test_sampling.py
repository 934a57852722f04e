import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aurlab import _backend
from aurlab.errors import ConfigError, SamplingError
from aurlab.geometry import SetKind, UncertaintySet, contains_many, per_entry_second_moment, volume
from aurlab.sampling import (
    HitAndRunChain,
    SamplerConfig,
    SamplingMethod,
    check_nesting,
    direct_sample,
    hit_and_run,
    nested_level_sample,
    rejection_sample,
)

KINDS = [k.value for k in SetKind]


def make(kind, rho=1.0, n=2, k=2, ratio=0.8):
    return UncertaintySet(kind, rho, n, k, ratio * rho if kind == "budget" else None)


@pytest.mark.parametrize("kind", KINDS)
def test_hit_and_run_stays_inside_and_is_seeded(kind):
    uset = make(kind, 0.5, 3, 2)
    a = hit_and_run(uset, SamplerConfig(seed=4, burn_in=50, thinning=3), 500)
    b = hit_and_run(uset, SamplerConfig(seed=4, burn_in=50, thinning=3), 500)
    c = hit_and_run(uset, SamplerConfig(seed=5, burn_in=50, thinning=3), 500)
    assert a.samples.shape == (500, 3, 2)
    assert contains_many(uset, a.samples).all()
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)
    assert not a.samples.flags.writeable


@pytest.mark.parametrize("kind", KINDS)
def test_chain_output_independent_of_call_split(kind):
    uset = make(kind, 1.0, 2, 3)
    cfg = SamplerConfig(seed=9, burn_in=7, thinning=2)
    whole = HitAndRunChain(uset, cfg).draw(300)
    chain = HitAndRunChain(uset, cfg)
    parts = np.concatenate([chain.draw(1), chain.draw(120), chain.draw(179)])
    assert np.array_equal(whole, parts)


@pytest.mark.skipif(_backend.compiled_run_chain is None, reason="compiled kernel not built")
@pytest.mark.parametrize("kind", KINDS)
def test_backends_bit_identical(kind, monkeypatch):
    uset = make(kind, 0.7, 4, 2)
    cfg = SamplerConfig(seed=21, burn_in=30, thinning=4)
    monkeypatch.setattr(_backend, "run_chain", _backend.compiled_run_chain)
    fast = hit_and_run(uset, cfg, 400).samples
    monkeypatch.setattr(_backend, "run_chain", _backend.python_run_chain)
    slow = hit_and_run(uset, cfg, 400).samples
    assert np.array_equal(fast, slow)


@settings(max_examples=25, deadline=None)
@given(kind=st.sampled_from(KINDS), n=st.integers(1, 4), k=st.integers(1, 3),
       seed=st.integers(0, 2**63), rho=st.floats(1e-3, 50.0))
def test_every_sampler_respects_membership(kind, n, k, seed, rho):
    uset = make(kind, rho, n, k)
    har = hit_and_run(uset, SamplerConfig(seed=seed, burn_in=5, thinning=1), 50)
    assert contains_many(uset, har.samples).all()
    dire = direct_sample(uset, seed, 50)
    assert contains_many(uset, dire.samples).all()


def test_start_point_validation():
    uset = make("diamond", 1.0, 1, 2)
    with pytest.raises(ConfigError):
        HitAndRunChain(uset, SamplerConfig(start=(0.9, 0.9)))
    with pytest.raises(ConfigError):
        HitAndRunChain(uset, SamplerConfig(start=(0.1,)))
    out = HitAndRunChain(uset, SamplerConfig(start=(0.2, -0.3), burn_in=0)).draw(5)
    assert contains_many(uset, out).all()


@pytest.mark.parametrize("bad", [dict(seed=-1), dict(burn_in=-1), dict(thinning=0), dict(seed=1.5)])
def test_sampler_config_validation(bad):
    with pytest.raises(ConfigError):
        SamplerConfig(**bad)


def test_rejection_acceptance_estimates_volume():
    uset = UncertaintySet("diamond", 1.0, 2, 1)
    batch = rejection_sample(uset, 3, 40_000)
    est = batch.acceptance_rate * 4.0
    se = 4.0 * np.sqrt(0.5 * 0.5 / batch.proposals)
    assert abs(est - volume(uset)) < 4 * se
    assert batch.method is SamplingMethod.REJECTION


def test_rejection_guards():
    with pytest.raises(ConfigError):
        rejection_sample(make("box", 1.0, 13, 1), 0, 10)
    with pytest.raises(SamplingError):
        rejection_sample(make("diamond", 1.0, 12, 1), 0, 10, max_proposals=100_000)


@pytest.mark.parametrize("kind", KINDS)
def test_direct_sampler_second_moment_in_high_dimension(kind):
    # exact sampler: iid draws, so the plain standard error applies
    uset = make(kind, 0.3, 60, 5)
    flat = direct_sample(uset, 11, 4000).flat
    per_sample = (flat * flat).mean(axis=1)
    se = per_sample.std(ddof=1) / np.sqrt(per_sample.size)
    assert abs(per_sample.mean() - per_entry_second_moment(uset)) < 4 * se


def test_direct_sampler_is_seeded():
    uset = make("budget", 1.0, 3, 3)
    assert np.array_equal(direct_sample(uset, 2, 100).samples, direct_sample(uset, 2, 100).samples)


@pytest.mark.parametrize("method", ["har", "direct"])
@pytest.mark.parametrize("kind", KINDS)
def test_nested_levels_escape_the_inner_set(kind, method):
    small = make(kind, 0.9, 2, 1)
    large = make(kind, 1.0, 2, 1)
    batch = nested_level_sample(small, large, SamplerConfig(seed=1, burn_in=20, thinning=2), 200,
                                method=method)
    assert not contains_many(small, batch.samples).any()
    assert contains_many(large, batch.samples).all()
    # acceptance estimates 1 - vol(small)/vol(large) = 1 - 0.81
    assert 0.1 < batch.acceptance_rate < 0.3


def test_nesting_checks():
    with pytest.raises(ConfigError):
        check_nesting(make("box", 1.0), make("box", 0.5))
    with pytest.raises(ConfigError):
        check_nesting(make("box", 0.5), make("diamond", 1.0))
    with pytest.raises(ConfigError):
        check_nesting(UncertaintySet("budget", 0.5, 2, 2, 0.5), UncertaintySet("budget", 1.0, 2, 2, 0.4))
    with pytest.raises(ConfigError):
        nested_level_sample(make("box", 0.5), make("box", 1.0), method="rej")


def test_nested_gives_up_when_inner_fills_outer():
    small = make("box", 1.0 - 1e-9, 2, 2)
    large = make("box", 1.0, 2, 2)
    with pytest.raises(SamplingError):
        nested_level_sample(small, large, SamplerConfig(seed=0), 5, max_states=2000, method="direct")


def test_count_must_be_positive():
    uset = make("box")
    for fn in (lambda: hit_and_run(uset, None, 0), lambda: direct_sample(uset, 0, 0),
               lambda: rejection_sample(uset, 0, 0)):
        with pytest.raises(ConfigError):
            fn()
