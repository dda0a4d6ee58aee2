"""Compiled tabular rollout on Four-Rooms.

Mirrors ``run_episode``'s reference loop step for step (same uniforms, same
arithmetic order) so either path can be used interchangeably.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from ..envs.fourrooms import GRID_SIZE, to_index
from .agent import Trajectory, episode_stats

_DELTAS = np.array([-GRID_SIZE, GRID_SIZE, -1, 1], dtype=np.int64)


@njit(cache=True)
def _sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def _softmax_into(row, temperature, out):
    n = row.shape[0]
    m = row[0] / temperature
    for i in range(1, n):
        z = row[i] / temperature
        if z > m:
            m = z
    tot = 0.0
    for i in range(n):
        out[i] = math.exp(row[i] / temperature - m)
        tot += out[i]
    for i in range(n):
        out[i] = out[i] / tot


@njit(cache=True)
def _select(q_row, eps, u_eps, u_choice):
    if eps > 0.0 and u_eps < eps:
        return int(u_choice * q_row.shape[0])
    best = 0
    for i in range(1, q_row.shape[0]):
        if q_row[i] > q_row[best]:
            best = i
    return best


@njit(cache=True)
def _episode(theta, nu, q_omega, q_u, free, deltas, start, goal, slip, cap, goal_reward,
             lr_critic, lr_theta, lr_beta, temperature, eps, gamma, eta, baseline, learn,
             env_u, agent_u, reach, bonus,
             out_s, out_a, out_r, out_s2, out_o, out_term, out_td, out_rt):
    n_actions = theta.shape[2]
    probs = np.empty(n_actions)
    s = start
    option = _select(q_omega[s], eps, agent_u[cap, 2], agent_u[cap, 3])
    fired = False
    switches = 0
    reached = False
    t = 0
    while True:
        # action
        _softmax_into(theta[option, s], temperature, probs)
        psum = 0.0
        for i in range(n_actions):
            psum += probs[i]
        v = agent_u[t, 0] * psum
        c = 0.0
        action = n_actions - 1
        for i in range(n_actions):
            c += probs[i]
            if v < c:
                action = i
                break
        # environment
        executed = action
        if env_u[t, 0] < slip:
            executed = int(env_u[t, 1] * 4)
        s2 = s + deltas[executed]
        if not free[s2]:
            s2 = s
        at_goal = s2 == goal
        reward = goal_reward if at_goal else 0.0
        done = at_goal or (t + 1 >= cap)
        # shaping
        r_train = reward
        if bonus != 0.0 and not fired and reach[option, s2]:
            fired = True
            r_train = reward + bonus
        td = 0.0
        if learn:
            beta_next = 0.0 if done else _sigmoid(nu[option, s2])
            if done:
                target = r_train
            else:
                qmax = q_omega[s2, 0]
                for j in range(1, q_omega.shape[1]):
                    if q_omega[s2, j] > qmax:
                        qmax = q_omega[s2, j]
                target = r_train + gamma * ((1.0 - beta_next) * q_omega[s2, option] + beta_next * qmax)
            td = target - q_omega[s, option]
            q_omega[s, option] += lr_critic * td
            q_u[s, option, action] += lr_critic * (target - q_u[s, option, action])
            qval = q_u[s, option, action]
            if baseline:
                qval -= q_omega[s, option]
            if qval != 0.0:
                _softmax_into(theta[option, s], temperature, probs)
                scale = lr_theta * qval
                for i in range(n_actions):
                    g = -probs[i]
                    if i == action:
                        g += 1.0
                    theta[option, s, i] += scale * g
            if not done:
                qmax = q_omega[s2, 0]
                for j in range(1, q_omega.shape[1]):
                    if q_omega[s2, j] > qmax:
                        qmax = q_omega[s2, j]
                adv = q_omega[s2, option] - qmax
                beta = _sigmoid(nu[option, s2])
                step = -lr_beta * beta * (1.0 - beta) * (adv + eta)
                if step != 0.0:
                    nu[option, s2] += step
        terminated = False
        if not done:
            terminated = agent_u[t, 1] < _sigmoid(nu[option, s2])
        out_s[t] = s
        out_a[t] = action
        out_r[t] = reward
        out_s2[t] = s2
        out_o[t] = option
        out_term[t] = terminated
        out_td[t] = td
        out_rt[t] = r_train
        t += 1
        if done:
            reached = at_goal
            break
        if terminated:
            switches += 1
            option = _select(q_omega[s2], eps, agent_u[t - 1, 2], agent_u[t - 1, 3])
            fired = False
        s = s2
    return t, switches, reached


def run_tabular_episode(agent, env, hooks, learn: bool = True):
    cfg = env.cfg
    cap = cfg.step_cap
    env.reset()
    u = agent.begin_episode(cap)
    shaping = hooks.tabular_shaping()
    n_opt, n_states = agent.options.nu.shape
    if shaping is None:
        reach, bonus = np.zeros((n_opt, n_states), dtype=np.bool_), 0.0
    else:
        reach, bonus = shaping
    h = agent.hyper
    out_s = np.empty(cap, dtype=np.int64)
    out_a = np.empty(cap, dtype=np.int64)
    out_r = np.empty(cap)
    out_s2 = np.empty(cap, dtype=np.int64)
    out_o = np.empty(cap, dtype=np.int64)
    out_term = np.empty(cap, dtype=np.bool_)
    out_td = np.empty(cap)
    out_rt = np.empty(cap)
    n, switches, reached = _episode(
        agent.options.theta, agent.options.nu, agent.critic.q_omega_table, agent.critic.q_u_table,
        env.free_index_mask, _DELTAS, to_index(cfg.start), to_index(cfg.goal), cfg.slip_prob, cap,
        cfg.goal_reward, agent.critic.lr, h.lr_theta, h.lr_beta, agent.options.temperature, agent.eps,
        agent.critic.gamma, h.eta, h.baseline, learn, env.uniforms, u, reach, float(bonus),
        out_s, out_a, out_r, out_s2, out_o, out_term, out_td, out_rt)
    env.state = int(out_s2[n - 1])
    env.t = n
    agent.end_episode()
    traj = Trajectory(states=out_s[:n].copy(), actions=out_a[:n].copy(), rewards=out_r[:n].copy(),
                      next_states=out_s2[:n].copy(), options=out_o[:n].copy(), terminated=out_term[:n].copy(),
                      td_errors=out_td[:n].copy(), train_rewards=out_rt[:n].copy())
    return traj, episode_stats(traj, n_opt, switches, bool(reached))
