import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpdoc.envs import FourRooms, FourRoomsConfig, Pinball, PinballConfig, fourier_features, normalize_state
from cpdoc.oc import (
    AgentHyper,
    CheckpointError,
    LinearCritic,
    LinearOptions,
    TabularCritic,
    TabularOptions,
    continuation_value,
    critic_update,
    intra_action,
    intra_policy_gradient_update,
    load_checkpoint,
    make_linear_agent,
    make_tabular_agent,
    run_episode,
    save_checkpoint,
    select_option,
    termination_gradient_update,
    termination_prob,
)
from cpdoc.tensor import numerical_grad, relative_error, Tensor

from oracles import CHAIN_LOGITS, ChainMDP, discounted_arrivals, enumerated_termination_gradient


# policy over options ------------------------------------------------------

def test_select_option_greedy_and_ties():
    rng = np.random.default_rng(0)
    assert select_option(np.array([1.0, 3.0, 2.0, 0.0]), 0.0, rng) == 1
    assert select_option(np.array([5.0, 5.0, 0.0, 0.0]), 0.0, rng) == 0


def test_select_option_uniform_at_eps_one():
    rng = np.random.default_rng(0)
    n = 100_000
    picks = np.bincount([select_option(np.array([9.0, 0.0, 0.0, 0.0]), 1.0, rng) for _ in range(n)], minlength=4)
    assert np.all(np.abs(picks / n - 0.25) < 0.01)


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=6), st.floats(0.01, 100))
def test_select_option_invariant_to_positive_scaling(row, scale):
    row = np.array(row)
    rng = np.random.default_rng(0)
    assert select_option(row, 0.0, rng) == select_option(row * scale, 0.0, rng)


# intra-option policies and terminations -----------------------------------

def test_equal_preferences_give_uniform_policy():
    opts = TabularOptions(2, 3, 4, temperature=0.001)
    assert np.allclose(opts.action_probs(1, 0), 0.25)


def test_low_temperature_is_nearly_greedy():
    opts = TabularOptions(1, 1, 4, temperature=0.001)
    opts.theta[0, 0] = [0.0, 0.1, -0.3, 0.05]
    assert opts.action_probs(0, 0)[1] > 1 - 1e-10
    rng = np.random.default_rng(0)
    assert all(intra_action(opts, 0, 0, rng) == 1 for _ in range(100))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_policies_are_distributions(seed):
    rng = np.random.default_rng(seed)
    tab = TabularOptions(3, 5, 4, temperature=float(rng.uniform(0.01, 2)))
    tab.theta[...] = rng.normal(size=tab.theta.shape) * 3
    lin = LinearOptions(3, 6, 5)
    lin.theta[...] = rng.normal(size=lin.theta.shape)
    x = rng.random(6)
    for o in range(3):
        for p in (tab.action_probs(int(rng.integers(5)), o), lin.action_probs(x, o)):
            assert np.all(p >= 0) and p.sum() == pytest.approx(1.0, abs=1e-12)


def test_termination_probabilities():
    opts = TabularOptions(1, 3, 2)
    opts.nu[0] = [0.0, 20.0, -30.0]
    assert termination_prob(opts, 0, 0) == 0.5
    assert termination_prob(opts, 0, 1) == pytest.approx(1.0, abs=1e-8)
    assert 0.0 < termination_prob(opts, 0, 2) < 1e-12
    lin = LinearOptions(1, 2, 2)
    lin.nu[0] = [1.0, -1.0]
    assert lin.termination_prob(np.array([0.3, 0.3]), 0) == 0.5


# critic ---------------------------------------------------------------------

def test_terminal_td_step():
    critic = TabularCritic(2, 1, 1, gamma=0.9, lr=0.5)
    critic_update(critic, 0, 0, 0, 1.0, 1, True, 0.0)
    assert critic.q_u(0, 0, 0) == 0.5 and critic.q_omega(0)[0] == 0.5


def test_continuation_value_with_certain_termination():
    critic = TabularCritic(2, 3, 1)
    critic.q_omega_table[1] = [1.0, 4.0, 2.0]
    assert continuation_value(critic, 1, 0, 1.0) == 4.0
    assert continuation_value(critic, 1, 0, 0.0) == 1.0
    critic_update(critic, 0, 0, 0, 0.5, 1, False, 1.0)
    assert critic.q_u(0, 0, 0) == pytest.approx(0.5 * (0.5 + 0.99 * 4.0))


def test_critic_converges_on_deterministic_chain():
    # s0 -> s1 (r=0) -> terminal (r=1); one option, one action, beta irrelevant
    gamma = 0.9
    critic = TabularCritic(2, 1, 1, gamma=gamma, lr=0.5)
    for _ in range(200):
        critic_update(critic, 0, 0, 0, 0.0, 1, False, 0.3)
        critic_update(critic, 1, 0, 0, 1.0, 1, True, 0.0)
    # value iteration fixed point
    assert critic.q_omega(1)[0] == pytest.approx(1.0, abs=1e-6)
    assert critic.q_omega(0)[0] == pytest.approx(gamma, abs=1e-6)


def test_linear_critic_matches_tabular_on_one_hot_features():
    tab = TabularCritic(3, 2, 2, gamma=0.9, lr=0.5)
    lin = LinearCritic(3, 2, 2, gamma=0.9, lr=0.5)
    eye = np.eye(3)
    rng = np.random.default_rng(0)
    for _ in range(50):
        s, s2, o, a = (int(v) for v in rng.integers(0, [3, 3, 2, 2]))
        r, beta, done = float(rng.normal()), float(rng.random()), bool(rng.random() < 0.2)
        critic_update(tab, s, o, a, r, s2, done, beta)
        critic_update(lin, eye[s], o, a, r, eye[s2], done, beta)
    assert np.allclose(lin.w_omega.T, tab.q_omega_table)


# intra-option policy gradient --------------------------------------------

def test_zero_q_leaves_policy():
    opts = TabularOptions(2, 2, 3)
    opts.theta[...] = np.random.default_rng(0).normal(size=opts.theta.shape)
    before = opts.theta.copy()
    intra_policy_gradient_update(opts, 0, 1, 2, 0.0, 0.25)
    assert np.array_equal(before, opts.theta)


def test_positive_q_raises_taken_action_only_in_that_option():
    opts = TabularOptions(2, 2, 3)
    opts.theta[...] = np.random.default_rng(1).normal(size=opts.theta.shape)
    before = opts.theta.copy()
    p = opts.action_probs(1, 0)[2]
    intra_policy_gradient_update(opts, 1, 0, 2, 0.7, 0.25)
    assert opts.action_probs(1, 0)[2] > p
    assert np.array_equal(opts.theta[1], before[1])
    probs = np.exp(before[0, 1]) / np.exp(before[0, 1]).sum()
    expected = before[0, 1] - 0.25 * 0.7 * probs
    expected[2] = before[0, 1, 2] + 0.25 * 0.7 * (1 - probs[2])
    assert np.allclose(opts.theta[0, 1], expected)


def test_policy_gradient_matches_finite_difference():
    rng = np.random.default_rng(2)
    prefs = rng.normal(size=4)
    action, q = 1, 0.8
    t = Tensor(prefs.copy())

    def objective():
        z = t.data - t.data.max()
        return float((z[action] - np.log(np.exp(z).sum())) * q)

    num = numerical_grad(objective, t)
    opts = TabularOptions(1, 1, 4)
    opts.theta[0, 0] = prefs
    intra_policy_gradient_update(opts, 0, 0, action, q, 1.0)
    assert relative_error(opts.theta[0, 0] - prefs, num) < 1e-5


# termination gradient ------------------------------------------------------

def test_zero_advantage_no_update_and_sign_of_step():
    opts = TabularOptions(2, 2, 2)
    critic = TabularCritic(2, 2, 2)
    critic.q_omega_table[0] = [1.0, 1.0]
    termination_gradient_update(opts, critic, 0, 0, 0.25)
    assert opts.nu[0, 0] == 0.0
    critic.q_omega_table[1] = [2.0, 1.0]
    termination_gradient_update(opts, critic, 1, 1, 0.25)  # negative advantage
    assert opts.nu[1, 1] > 0
    critic.q_omega_table[1] = [2.0, 2.0]
    termination_gradient_update(opts, critic, 1, 0, 0.25, eta=0.1)
    assert opts.nu[0, 1] < 0  # the margin alone lowers termination


@settings(max_examples=100)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 1))
def test_termination_step_opposes_advantage_plus_margin(q0, q1, logit, eta):
    opts = TabularOptions(2, 1, 2)
    opts.nu[0, 0] = logit
    critic = TabularCritic(1, 2, 2)
    critic.q_omega_table[0] = [q0, q1]
    adv = termination_gradient_update(opts, critic, 0, 0, 1.0, eta)
    beta = 1 / (1 + np.exp(-logit))
    assert opts.nu[0, 0] - logit == pytest.approx(-beta * (1 - beta) * (adv + eta), abs=1e-12)


def implemented_termination_steps(mdp, base):
    """Per-visit termination steps at lr = 1, using the exact critic."""
    opts = TabularOptions(2, 3, 2)
    opts.nu[:, :2] = base
    critic = TabularCritic(3, 2, 2, gamma=mdp.gamma)
    critic.q_omega_table[:2] = mdp.q_omega()
    step = np.zeros((2, 2))
    for o in range(2):
        for s in range(2):
            before = opts.nu[o, s]
            termination_gradient_update(opts, critic, s, o, 1.0)
            step[o, s] = opts.nu[o, s] - before
            opts.nu[o, s] = before
    return step


def test_termination_update_matches_enumerated_return_gradient():
    base = CHAIN_LOGITS
    mdp = ChainMDP(base)
    q = mdp.q_omega()
    assert np.all(q[:, 0] > q[:, 1])  # greedy choice really is option 0
    oracle = enumerated_termination_gradient(base)
    visits = discounted_arrivals(mdp, n=200_000, seed=0)
    estimate = (visits * implemented_termination_steps(mdp, base) / 200_000)[1]
    assert np.all(np.sign(estimate) == np.sign(oracle))
    assert relative_error(estimate, oracle) < 0.05


# episodes -------------------------------------------------------------------

def small_agent(seed=0, **kw):
    hyper = AgentHyper(**kw)
    return make_tabular_agent(169, 4, 4, hyper, np.random.default_rng(seed))


@pytest.mark.parametrize("fast", [True, False])
def test_never_terminating_options_run_whole_episode(fast):
    agent = small_agent(lr_beta=1e-12)
    agent.options.nu[...] = -800.0
    env = FourRooms(FourRoomsConfig(), np.random.default_rng(1))
    traj, stats = run_episode(agent, env, learn=False, fast=fast)
    assert stats.switches == 0 and len(set(traj.options.tolist())) == 1


@pytest.mark.parametrize("fast", [True, False])
def test_always_terminating_options_reselect_every_step(fast):
    agent = small_agent()
    agent.options.nu[...] = 800.0
    env = FourRooms(FourRoomsConfig(), np.random.default_rng(1))
    traj, stats = run_episode(agent, env, learn=False, fast=fast)
    assert stats.switches == len(traj) - 1


def test_compiled_and_reference_paths_agree():
    def train(fast):
        agent = small_agent(seed=3)
        env = FourRooms(FourRoomsConfig(), np.random.default_rng(4))
        steps = [run_episode(agent, env, fast=fast)[1].steps for _ in range(15)]
        return steps, agent.get_params()

    (s1, p1), (s2, p2) = train(True), train(False)
    assert s1 == s2
    for k in p1:
        assert np.array_equal(p1[k], p2[k]), k


def test_usage_fractions_and_step_cap():
    agent = small_agent(seed=5)
    env = FourRooms(FourRoomsConfig(step_cap=60), np.random.default_rng(5))
    for _ in range(5):
        traj, stats = run_episode(agent, env)
        assert stats.steps <= 60
        assert stats.usage.sum() == pytest.approx(1.0, abs=1e-9)
        assert stats.mean_option_len == pytest.approx(stats.steps / (stats.switches + 1))


def test_linear_agent_on_pinball_runs():
    cfg = PinballConfig(start=(0.2, 0.2), goal=(0.8, 0.8), step_cap=30)
    env = Pinball(cfg)
    hyper = AgentHyper(lr_critic=1e-3, lr_theta=1e-3, lr_beta=1e-4, temperature=1.0, eps_option=0.1)
    agent = make_linear_agent(256, 5, 2, hyper, np.random.default_rng(0),
                              lambda s: fourier_features(normalize_state(s)))
    traj, stats = run_episode(agent, env)
    assert stats.steps == 30 and traj.states.shape == (30, 4)
    assert np.all(np.isfinite(agent.critic.w_omega))


def test_checkpoint_roundtrip(tmp_path):
    agent = small_agent(seed=6)
    env = FourRooms(FourRoomsConfig(), np.random.default_rng(6))
    for _ in range(3):
        run_episode(agent, env)
    save_checkpoint(agent, tmp_path / "a.npz", extra={"episode": 3})
    fresh = small_agent(seed=99)
    meta = load_checkpoint(fresh, tmp_path / "a.npz")
    assert meta["extra"] == {"episode": 3} and meta["version"] == 1
    for k, v in agent.get_params().items():
        assert np.array_equal(fresh.get_params()[k], v)
    wrong = make_tabular_agent(169, 4, 2, AgentHyper(), np.random.default_rng(0))
    with pytest.raises(CheckpointError):
        load_checkpoint(wrong, tmp_path / "a.npz")


def test_hyper_validation():
    assert AgentHyper().validate() == []
    errs = AgentHyper(lr_critic=-1, gamma=0).validate()
    assert any("lr_critic" in e for e in errs) and any("gamma" in e for e in errs)
