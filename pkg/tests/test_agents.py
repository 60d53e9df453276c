import math
from dataclasses import replace

import numpy as np
import pytest

from sagdp import nn_core as nn
from sagdp.agents import (
    BcPolicy,
    CqlAgent,
    CqlConfig,
    ExpertPolicy,
    TrainConfig,
    TransitionBatch,
    baseline_policy,
    bc_train,
    cql_loss,
    cql_train,
    episode_seed,
    evaluate,
    load_policy,
    rollout_return,
    select_action,
    _cql_terms,
)
from sagdp.env import N_LOOKAHEAD, Observation, SagdpEnv
from sagdp.errors import ValidationError
from sagdp.scenario_gen import Dataset, GenConfig, build_dataset, gen_scenario

from test_scenario_gen import CALM_CONFIG, first_uncongested_seed

CONGESTED_CONFIG = GenConfig(
    seed=0,
    n_flights=260,
    peak_demand_per_quarter=12,
    regime_transition=((0.5, 0.3, 0.2), (0.3, 0.4, 0.3), (0.2, 0.3, 0.5)),
    runway_count_range=(1, 2),
    scope_mix=0.9,
)


def tiny_dataset(n_scenarios=2, policy=None, noise=1, seed=0, n_flights=40):
    scenarios = [
        gen_scenario(GenConfig(seed=episode_seed(seed, i), n_flights=n_flights))
        for i in range(n_scenarios)
    ]
    return build_dataset(scenarios, policy or ExpertPolicy(), noise=noise, seed=seed)


def flat_obs(value=0.0, dim=122):
    flat = np.full(dim, value)
    return Observation(
        arr_rate=flat[0],
        act_arr=flat[1],
        ceiling_bins=flat[2:10],
        wind_angle=flat[10:18],
        wind_speed=flat[18:26],
        visibility_bins=flat[26:34],
        runway_count=flat[34:42],
        arr_demand=flat[42:50],
        dep_demand=flat[50:58],
        enroute=flat[58:].reshape(8, 8),
    )


def constant_q_agent(bias_per_head, paar_max=16, obs_dim=4, gamma=0.99, alpha=1.0):
    """Agent whose Q values ignore the input: zero weights, chosen output biases."""
    n_rates = paar_max + 1
    spec = nn.NetSpec.dense((obs_dim, 3, N_LOOKAHEAD * n_rates), "linear")
    params = nn.init_params(spec, np.random.default_rng(0))
    for w in params.weights:
        w[:] = 0.0
    params.biases[0][:] = 0.0
    params.biases[1][:] = np.asarray(bias_per_head, dtype=np.float64).reshape(-1)
    return CqlAgent(
        q_params=params,
        target_params=params.copy(),
        obs_mean=np.zeros(obs_dim),
        obs_std=np.ones(obs_dim),
        paar_max=paar_max,
        config=CqlConfig(alpha=alpha, gamma=gamma),
    )


class TestBcTrain:
    def test_constant_expert_is_learned(self):
        policy_12 = baseline_policy("CONSTANT", 12)
        dataset = tiny_dataset(policy=policy_12, noise=0)
        assert (dataset.actions == 12).all()
        policy, rows = bc_train(dataset, train_config=TrainConfig(n_iter=2000, seed=0))
        losses = np.array([r.train_loss for r in rows])
        assert np.isfinite(losses).all()
        assert losses[-1] <= 1e-3
        for i in range(0, len(dataset), 17):
            action = policy.action(flat_obs_from(dataset.obs[i]))
            assert action.paar == (12,) * 8

    def test_loss_halves_on_expert_dataset(self):
        dataset = tiny_dataset(n_scenarios=4, noise=1)
        _, rows = bc_train(dataset, train_config=TrainConfig(n_iter=500, seed=1))
        assert rows[-1].train_loss <= 0.5 * rows[0].train_loss

    def test_empty_dataset_rejected(self):
        ds = tiny_dataset()
        empty = Dataset(
            obs=ds.obs[:0],
            actions=ds.actions[:0],
            rewards=ds.rewards[:0],
            next_obs=ds.next_obs[:0],
            dones=ds.dones[:0],
            obs_mean=ds.obs_mean,
            obs_std=ds.obs_std,
        )
        with pytest.raises(ValidationError):
            bc_train(empty)

    def test_deterministic(self):
        dataset = tiny_dataset()
        cfg = TrainConfig(n_iter=50, seed=3)
        p1, r1 = bc_train(dataset, train_config=cfg)
        p2, r2 = bc_train(dataset, train_config=cfg)
        assert (p1.params.to_flat() == p2.params.to_flat()).all()
        assert [r.train_loss for r in r1] == [r.train_loss for r in r2]


def flat_obs_from(flat):
    return Observation(
        arr_rate=float(flat[0]),
        act_arr=float(flat[1]),
        ceiling_bins=flat[2:10],
        wind_angle=flat[10:18],
        wind_speed=flat[18:26],
        visibility_bins=flat[26:34],
        runway_count=flat[34:42],
        arr_demand=flat[42:50],
        dep_demand=flat[50:58],
        enroute=flat[58:122].reshape(8, 8),
    )


class TestCqlLoss:
    def _batch(self, agent, rng, b=16, obs_dim=4):
        return TransitionBatch(
            obs=rng.normal(size=(b, obs_dim)),
            actions=rng.integers(0, agent.n_rates, size=(b, N_LOOKAHEAD)),
            rewards=rng.normal(size=b),
            next_obs=rng.normal(size=(b, obs_dim)),
            dones=rng.random(size=b) < 0.2,
        )

    def test_alpha_zero_equals_td(self, rng):
        bias = rng.normal(size=N_LOOKAHEAD * 17)
        agent = constant_q_agent(bias, alpha=0.0)
        batch = self._batch(agent, rng)
        loss, td, cons = cql_loss(agent, batch)
        assert loss == td
        assert cons != 0.0  # still reported, just unweighted

    def test_single_transition_hand_computation(self):
        # Q values constant in the observation: head h has values 0.1*h + [0, 0.5]
        paar_max = 1
        bias = np.array([[0.1 * h, 0.1 * h + 0.5] for h in range(8)])
        agent = constant_q_agent(bias, paar_max=paar_max, gamma=0.5, alpha=2.0)
        actions = np.array([[0, 1, 0, 1, 0, 1, 0, 1]])
        r, done = -3.0, False
        batch = TransitionBatch(
            obs=np.zeros((1, 4)),
            actions=actions,
            rewards=np.array([r]),
            next_obs=np.zeros((1, 4)),
            dones=np.array([done]),
        )
        td_terms, cons_terms = [], []
        for h in range(8):
            q = [0.1 * h, 0.1 * h + 0.5]
            q_sel = q[actions[0, h]]
            target = r + 0.5 * max(q)  # target net equals q net here
            td_terms.append((q_sel - target) ** 2)
            lse = math.log(math.exp(q[0]) + math.exp(q[1]))
            cons_terms.append(lse - q_sel)
        expected_td = sum(td_terms) / 8
        expected_cons = sum(cons_terms) / 8
        loss, td, cons = cql_loss(agent, batch)
        assert abs(td - expected_td) < 1e-9
        assert abs(cons - expected_cons) < 1e-9
        assert abs(loss - (expected_td + 2.0 * expected_cons)) < 1e-9

    def test_constant_q_conservative_term_is_log_n(self, rng):
        agent = constant_q_agent(np.full(8 * 17, 1.7))
        batch = self._batch(agent, rng)
        _, _, cons = cql_loss(agent, batch)
        assert abs(cons - math.log(17.0)) < 1e-12

    def test_conservative_term_shift_invariant(self, rng):
        bias = rng.normal(size=(8, 17))
        agent1 = constant_q_agent(bias)
        shifted = bias.copy()
        shifted[3] += 123.0  # add a constant to every value of one head
        agent2 = constant_q_agent(shifted)
        batch = self._batch(agent1, rng)
        _, _, cons1 = cql_loss(agent1, batch)
        _, _, cons2 = cql_loss(agent2, batch)
        assert abs(cons1 - cons2) < 1e-9


class TestCqlTrain:
    def test_deterministic_checkpoints(self):
        dataset = tiny_dataset()
        cfg = TrainConfig(n_iter=60, seed=5)
        a1, _ = cql_train(dataset, train_config=cfg)
        a2, _ = cql_train(dataset, train_config=cfg)
        assert (a1.q_params.to_flat() == a2.q_params.to_flat()).all()
        assert (a1.target_params.to_flat() == a2.target_params.to_flat()).all()

    def test_alpha_zero_loss_trace_equals_td_trace(self):
        dataset = tiny_dataset()
        cfg = TrainConfig(n_iter=80, seed=2)
        _, rows = cql_train(dataset, agent_config=CqlConfig(alpha=0.0), train_config=cfg)
        assert all(r.train_loss == r.td_term for r in rows)
        assert all(r.conservative_term is not None for r in rows)

    def test_conservatism_after_training(self, rng):
        dataset = tiny_dataset(n_scenarios=5, noise=2, seed=1)
        agent, _ = cql_train(
            dataset,
            agent_config=CqlConfig(alpha=5.0),
            train_config=TrainConfig(n_iter=600, seed=0),
        )
        obs_norm = dataset.normalize(dataset.obs)
        q = agent.q_values(obs_norm)
        rows = np.arange(len(dataset))[:, None]
        heads = np.arange(N_LOOKAHEAD)[None, :]
        q_data = q[rows, heads, dataset.actions].mean()
        random_actions = rng.integers(0, agent.n_rates, size=dataset.actions.shape)
        q_rand = q[rows, heads, random_actions].mean()
        assert q_data > q_rand


class TestSelectAction:
    def test_increasing_values_pick_max_rate(self):
        bias = np.tile(np.arange(17.0), (8, 1))
        agent = constant_q_agent(bias, obs_dim=122)
        assert select_action(agent, flat_obs()).paar == (16,) * 8

    def test_tie_breaks_to_lower_rate(self):
        bias = np.zeros((8, 17))
        bias[:, 3] = 5.0
        bias[:, 7] = 5.0  # exact two-way tie
        agent = constant_q_agent(bias, obs_dim=122)
        assert select_action(agent, flat_obs()).paar == (3,) * 8

    def test_bc_rounding_11_6_to_12(self):
        spec = nn.NetSpec.dense((122, 2, 8), "linear")
        params = nn.init_params(spec, np.random.default_rng(0))
        for w in params.weights:
            w[:] = 0.0
        params.biases[0][:] = 0.0
        params.biases[1][:] = 11.6 / 16.0
        policy = BcPolicy(params, np.zeros(122), np.ones(122), paar_max=16)
        assert policy.action(flat_obs()).paar == (12,) * 8


class TestEvaluate:
    def test_expert_zero_on_uncongested_family(self):
        master = first_uncongested_seed()
        # verify the family members drawn by evaluate are themselves uncongested
        for i in range(10):
            sc = gen_scenario(replace(CALM_CONFIG, seed=episode_seed(master, i)))
            if not all(q.arr_rate >= q.sched_arr_demand for q in sc.quarters):
                pytest.skip("family draw congested; unit test needs a calm family")
        result = evaluate(ExpertPolicy(), CALM_CONFIG, 10, seed=master)
        assert result.mean == 0.0 and result.std == 0.0

    def test_reproducible(self):
        policy = baseline_policy("CONSTANT", 10)
        r1 = evaluate(policy, CONGESTED_CONFIG, 5, seed=3)
        r2 = evaluate(policy, CONGESTED_CONFIG, 5, seed=3)
        assert (r1.returns == r2.returns).all()

    def test_larger_batch_shrinks_std(self):
        policy = baseline_policy("CONSTANT", 12)
        small = evaluate(policy, CONGESTED_CONFIG, 40, seed=1)
        large = evaluate(policy, CONGESTED_CONFIG, 160, seed=1)
        assert large.std < small.std

    def test_constant_default_rate_is_negative_on_congestion(self):
        policy = baseline_policy("CONSTANT", 12)
        result = evaluate(policy, CONGESTED_CONFIG, 5, seed=0)
        assert result.mean < 0.0


class TestBaselines:
    def test_constant_zero_strictly_negative(self):
        sc = gen_scenario(CONGESTED_CONFIG)
        env = SagdpEnv(sc)
        assert rollout_return(env, baseline_policy("CONSTANT", 0), sc) < 0.0

    def test_constant_paar_max_nonpositive(self):
        sc = gen_scenario(replace(CONGESTED_CONFIG, seed=4))
        env = SagdpEnv(sc)
        assert rollout_return(env, baseline_policy("CONSTANT", 16), sc) <= 0.0

    def test_oracle_equals_expert_action_for_action(self):
        sc = gen_scenario(replace(CONGESTED_CONFIG, seed=5))
        env = SagdpEnv(sc)
        oracle = baseline_policy("ORACLE_CAPACITY")
        expert = ExpertPolicy()
        obs = env.reset()
        done = False
        while not done:
            a1 = select_action(oracle, obs)
            a2 = select_action(expert, obs)
            assert a1.paar == a2.paar
            result = env.step(a1)
            obs, done = result.obs, result.done

    def test_constant_range_checked(self):
        with pytest.raises(ValidationError):
            baseline_policy("CONSTANT", 17)


class TestCheckpointRoundTrip:
    def test_bc_save_load(self, tmp_path):
        dataset = tiny_dataset()
        policy, _ = bc_train(dataset, train_config=TrainConfig(n_iter=20, seed=0))
        policy.save(tmp_path / "bc.ckpt")
        loaded = load_policy(tmp_path / "bc.ckpt")
        assert isinstance(loaded, BcPolicy)
        assert (loaded.params.to_flat() == policy.params.to_flat()).all()
        obs = flat_obs_from(dataset.obs[0])
        assert loaded.action(obs).paar == policy.action(obs).paar

    def test_cql_save_load(self, tmp_path):
        dataset = tiny_dataset()
        agent, _ = cql_train(
            dataset,
            agent_config=CqlConfig(alpha=2.0),
            train_config=TrainConfig(n_iter=20, seed=0),
        )
        agent.save(tmp_path / "cql.ckpt")
        loaded = load_policy(tmp_path / "cql.ckpt")
        assert isinstance(loaded, CqlAgent)
        assert loaded.config.alpha == 2.0
        assert (loaded.q_params.to_flat() == agent.q_params.to_flat()).all()
        assert (loaded.target_params.to_flat() == agent.target_params.to_flat()).all()


# --- finite differences through the composite losses -------------------------


def bc_fd_error(seed=0, h=1e-5):
    """Max relative error of the BC training gradient vs central differences."""
    rng = np.random.default_rng(seed)
    b, dim = 6, 5
    spec = nn.NetSpec.dense((dim, 6, N_LOOKAHEAD), "tanh")
    params = nn.init_params(spec, rng)
    x = rng.normal(size=(b, dim))
    y = rng.integers(0, 17, size=(b, N_LOOKAHEAD)) / 16.0

    def loss_of(p):
        out, _ = nn.forward(p, x)
        return float(np.mean((out - y) ** 2))

    out, cache = nn.forward(params, x)
    grads = nn.backward(params, cache, 2.0 * (out - y) / out.size).to_flat()
    return _fd_error(params, spec, loss_of, grads, h)


def cql_fd_error(seed=0, alpha=1.5, h=1e-5):
    """Max relative error of the CQL training gradient vs central differences."""
    rng = np.random.default_rng(seed)
    b, dim, paar_max = 5, 4, 3
    spec = nn.NetSpec.dense((dim, 6, N_LOOKAHEAD * (paar_max + 1)), "relu")
    params = nn.init_params(spec, rng)
    agent = CqlAgent(
        q_params=params,
        target_params=nn.init_params(spec, np.random.default_rng(seed + 1)),
        obs_mean=np.zeros(dim),
        obs_std=np.ones(dim),
        paar_max=paar_max,
        config=CqlConfig(alpha=alpha, gamma=0.9),
    )
    batch = TransitionBatch(
        obs=rng.normal(size=(b, dim)),
        actions=rng.integers(0, paar_max + 1, size=(b, N_LOOKAHEAD)),
        rewards=rng.normal(size=b),
        next_obs=rng.normal(size=(b, dim)),
        dones=rng.random(size=b) < 0.3,
    )
    _, _, _, grads = _cql_terms(agent, batch, want_grad=True)

    def loss_of(p):
        saved = agent.q_params
        agent.q_params = p
        loss, _, _ = cql_loss(agent, batch)
        agent.q_params = saved
        return loss

    return _fd_error(agent.q_params, spec, loss_of, grads.to_flat(), h)


def _fd_error(params, spec, loss_of, analytic, h):
    flat = params.to_flat()
    numeric = np.empty_like(flat)
    for i in range(flat.shape[0]):
        bumped = flat.copy()
        bumped[i] = flat[i] + h
        up = loss_of(nn.Params.from_flat(spec, bumped))
        bumped[i] = flat[i] - h
        down = loss_of(nn.Params.from_flat(spec, bumped))
        numeric[i] = (up - down) / (2.0 * h)
    scale = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / scale))


class TestCompositeGradients:
    def test_bc_loss_gradient(self):
        assert bc_fd_error(seed=0) < 1e-4

    def test_cql_loss_gradient(self):
        assert cql_fd_error(seed=0) < 1e-4

    def test_cql_loss_gradient_alpha_zero(self):
        assert cql_fd_error(seed=1, alpha=0.0) < 1e-4
