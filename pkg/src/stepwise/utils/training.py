import os
import sys
import math
import logging
import itertools
import collections
import concurrent.futures

import click_log
import tqdm

import numpy as np
import pandas as pd

from .constants import INTERFACE_KNAPSACK, QUERY_MIXED, CHECKPOINT_NAME
from .vm import StackOverflow, OUTCOME_SOLVED, OUTCOME_BUDGET_EXHAUSTED, run_episode
from .tasks import make_env, make_agent, new_task_instance
from .policy import PolicyAgent, ValueBaseline, new_policy
from .optim import Adam
from .config import ConfigError, SWEEP_GRID
from .bench import evaluate
from .checkpoint import save_checkpoint

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("training")
click_log.basic_config(logger)

SWEEP_KEYS = ("learning_rate", "gamma", "entropy_weight", "n_steps")

TrainResult = collections.namedtuple("TrainResult", ["policy", "baseline", "history", "best"])


def _seed_of(config):
    return 0 if config.seed is None else int(config.seed)


def _streams(seed, count, tag):
    """`count` independent generators for one purpose (`tag`) of a run."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence([seed, tag]).spawn(count)]


def _append_log(path, row):
    if path is None:
        return
    pd.DataFrame([row]).to_csv(path, mode="a", header=not os.path.exists(path), index=False)


################################################################################
# Validation

def validation_sizes(config):
    lo, hi = config.sizes
    return sorted({lo, (lo + hi) // 2, hi})


def validate_policy(policy, config, threads=1):
    """Greedy solve rate (%) and mean episode length on fresh instances from the training range."""

    sizes = validation_sizes(config)
    per_size = max(1, math.ceil(config.eval_episodes / len(sizes)))
    report = evaluate(
        PolicyAgent(policy, greedy=True), config.interface, sizes, episodes=per_size, cap_rule=config.cap_rule,
        seed=_seed_of(config), threads=threads, reward_mode=config.reward_mode, step_penalty=config.step_penalty,
        progress=False,
    )
    frame = report.to_frame()
    return float(frame["solve_rate"].mean()), float(frame["mean_length"].mean())


def greedy_agreement(policy, observations, instructions):
    """Fraction of states on which the greedy action equals the given one."""
    if not instructions:
        return float("nan")
    hits = sum(policy.sample(obs, greedy=True) == instr for obs, instr in zip(observations, instructions))
    return hits / len(instructions)


################################################################################
# Behaviour cloning

def teacher_episode(config, teacher, rng):
    n = int(rng.integers(config.sizes[0], config.sizes[1] + 1))
    cap = config.cap_rule.cap(n)
    state = new_task_instance(config.interface, n, rng, QUERY_MIXED)
    budget = cap if config.interface == INTERFACE_KNAPSACK else None
    env = make_env(config.interface, state, config.reward_mode, config.step_penalty, budget=budget)
    return run_episode(env, teacher, cap, rng)


def teacher_traces(config, teacher, rngs, threads=1):
    """One teacher trace per generator, in generator order."""
    traces = [None] * len(rngs)
    if threads <= 1:
        for i, rng in enumerate(rngs):
            traces[i] = teacher_episode(config, teacher, rng)
        return traces

    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as executor:
        futures = {executor.submit(teacher_episode, config, teacher, rng): i for i, rng in enumerate(rngs)}
        for future in concurrent.futures.as_completed(futures):
            traces[futures[future]] = future.result()
    return traces


def bc_update(policy, observations, instructions, optimizer):
    """One step on the mean negative log-likelihood of `instructions`; returns the loss."""
    optimizer.zero_grad()
    logp, _, cache = policy.evaluate(observations, instructions)
    count = len(instructions)
    policy.backward(cache, np.full(count, -1.0 / count), 0.0)
    optimizer.step()
    return float(-logp.mean())


def train_bc(config, policy=None, threads=1, log_path=None, progress=True):
    """Imitate `config.teacher`: every epoch draws fresh teacher traces and
    sweeps them in shuffled minibatches."""

    seed = _seed_of(config)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    policy = new_policy(config.interface, rng) if policy is None else policy
    teacher = make_agent(config.teacher, config.interface)
    optimizer = Adam([policy], config.bc_learning_rate)

    logger.info("Behaviour cloning %s on %s, sizes %d-%d, %d epoch(s) of %d episodes",
                config.teacher, config.interface, config.sizes[0], config.sizes[1], config.bc_epochs,
                config.bc_episodes)

    history = []
    best = None
    for epoch in tqdm.tqdm(range(1, config.bc_epochs + 1), desc="Progress", unit=" epoch", colour="green",
                           file=sys.stderr, disable=not progress):
        rngs = _streams(seed, config.bc_episodes, epoch)
        traces = teacher_traces(config, teacher, rngs, threads)
        observations = [o for t in traces for o in t.observations]
        instructions = [i for t in traces for i in t.instructions]

        order = rng.permutation(len(instructions))
        losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start: start + config.batch_size]
            losses.append(bc_update(policy, [observations[i] for i in idx], [instructions[i] for i in idx],
                                    optimizer))

        row = dict(epoch=epoch, samples=len(instructions), loss=float(np.mean(losses)) if losses else float("nan"),
                   solve_rate=float("nan"), mean_length=float("nan"))
        if epoch % config.eval_interval == 0 or epoch == config.bc_epochs:
            row["solve_rate"], row["mean_length"] = validate_policy(policy, config, threads)
            best = _better(best, policy, None, row)
        logger.debug("epoch %d: %s", epoch, row)
        _append_log(log_path, row)
        history.append(row)

    return TrainResult(policy, None, pd.DataFrame(history), best)


def _better(best, policy, baseline, row):
    """Keep the parameters with the highest validation solve rate, then the shortest episodes."""
    key = (-row["solve_rate"], row["mean_length"])
    if best is None or key < best[0]:
        return (key, policy.state_dict(), baseline.state_dict() if baseline is not None else None, dict(row))
    return best


################################################################################
# Policy gradient

def nstep_returns(rewards, values, gamma, n, dones=None, bootstrap=None):
    """Bootstrapped n-step returns for one rollout segment.

    :param rewards: r_0 .. r_{T-1}
    :param values: V(s_0) .. V(s_T); V(s_T) bootstraps the end of the segment
    :param dones: dones[t] is True when the episode ended with step t
    :param bootstrap: value used after an episode that ended at t (0 when omitted, i.e. terminal)
    :return: G_0 .. G_{T-1}"""

    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    T = len(rewards)
    if len(values) != T + 1:
        raise ValueError(f"Need {T + 1} values for {T} rewards, got {len(values)}")
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    dones = np.zeros(T, dtype=bool) if dones is None else np.asarray(dones, dtype=bool)

    returns = np.zeros(T)
    for t in range(T):
        G = 0.0
        discount = 1.0
        k = t
        ended = False
        while k < T and k < t + n:
            G += discount * rewards[k]
            discount *= gamma
            if dones[k]:
                G += discount * (0.0 if bootstrap is None else bootstrap[k])
                ended = True
                break
            k += 1
        if not ended:
            G += discount * values[k]
        returns[t] = G
    return returns


class RolloutBatch:
    """Steps gathered by the actors for one update.

    `teacher_actions` is None unless the imitation term is enabled."""

    def __init__(self, observations, actions, rewards, returns, values, teacher_actions=None, episodes=None):
        self.observations = list(observations)
        self.actions = list(actions)
        self.rewards = np.asarray(rewards, dtype=float)
        self.returns = np.asarray(returns, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.advantages = self.returns - self.values
        self.teacher_actions = None if teacher_actions is None else list(teacher_actions)
        self.episodes = list(episodes) if episodes else []

    def __len__(self):
        return len(self.actions)


Segment = collections.namedtuple(
    "Segment", ["observations", "actions", "rewards", "dones", "bootstrap", "teacher_actions", "episodes"]
)


class Actor:
    """Owns one environment and keeps stepping it across updates; a new
    instance from the training range replaces each finished episode."""

    def __init__(self, config, rng, teacher=None):
        self.config = config
        self.rng = rng
        self.teacher = teacher
        self.env = None
        self.cap = None
        self.steps = 0

    def reset(self):
        config = self.config
        while True:
            n = int(self.rng.integers(config.sizes[0], config.sizes[1] + 1))
            self.cap = config.cap_rule.cap(n)
            state = new_task_instance(config.interface, n, self.rng, QUERY_MIXED)
            budget = self.cap if config.interface == INTERFACE_KNAPSACK else None
            self.env = make_env(config.interface, state, config.reward_mode, config.step_penalty, budget=budget)
            if not self.env.done:
                break
        self.steps = 0

    def collect(self, policy, value, n_steps):
        if self.env is None:
            self.reset()

        out = Segment([], [], [], [], [], [] if self.teacher is not None else None, [])
        for _ in range(n_steps):
            obs = self.env.observe()
            action = policy.sample(obs, self.rng)
            self.env.schema.validate(action, self.env.pointer_size)
            if self.teacher is not None:
                out.teacher_actions.append(self.teacher.act(obs))

            overflow = False
            try:
                reward = self.env.step(action)
            except StackOverflow:
                reward, overflow = 0.0, True
            self.steps += 1

            terminal = self.env.done and self.env.status != OUTCOME_BUDGET_EXHAUSTED
            truncated = not terminal and (overflow or self.env.done or self.steps >= self.cap)

            out.observations.append(obs)
            out.actions.append(action)
            out.rewards.append(reward)
            out.dones.append(terminal or truncated)
            out.bootstrap.append(0.0 if terminal else value)

            if terminal or truncated:
                out.episodes.append((self.steps, self.env.status == OUTCOME_SOLVED))
                self.reset()
        return out


def collect_rollouts(policy, baseline, actors, config, threads=1):
    """Run every actor for `config.n_steps` on a snapshot of the policy."""

    snapshot = policy.snapshot()
    value = float(baseline.value[0])
    segments = [None] * len(actors)
    if threads <= 1:
        for i, actor in enumerate(actors):
            segments[i] = actor.collect(snapshot, value, config.n_steps)
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as executor:
            futures = {executor.submit(a.collect, snapshot, value, config.n_steps): i for i, a in enumerate(actors)}
            for future in concurrent.futures.as_completed(futures):
                segments[futures[future]] = future.result()

    observations, actions, rewards, returns, values, teacher, episodes = [], [], [], [], [], [], []
    for seg in segments:
        T = len(seg.rewards)
        seg_values = np.full(T + 1, value)
        returns.append(nstep_returns(seg.rewards, seg_values, config.gamma, config.n_steps, seg.dones,
                                     seg.bootstrap))
        values.append(seg_values[:T])
        observations += seg.observations
        actions += seg.actions
        rewards += seg.rewards
        episodes += seg.episodes
        if seg.teacher_actions is not None:
            teacher += seg.teacher_actions

    return RolloutBatch(
        observations, actions, rewards, np.concatenate(returns), np.concatenate(values),
        teacher_actions=teacher if actors and actors[0].teacher is not None else None, episodes=episodes,
    )


def _imitating(batch, config):
    return config.imitation and batch.teacher_actions is not None and config.imitation_weight > 0


def surrogate_loss(policy, baseline, batch, config):
    """Scalar loss whose gradient `pg_update` follows (advantages held fixed).

    mean[-A log p(a) - beta H + lambda (-log p(a'))] + mu mean[(G - V)^2]"""

    logp, entropy, _ = policy.evaluate(batch.observations, batch.actions)
    parts = {
        "pg_loss": float(-np.mean(batch.advantages * logp)),
        "entropy": float(np.mean(entropy)),
        "imitation_loss": 0.0,
    }
    parts["entropy_loss"] = -config.entropy_weight * parts["entropy"]
    if _imitating(batch, config):
        logp_teacher, _, _ = policy.evaluate(batch.observations, batch.teacher_actions)
        parts["imitation_loss"] = float(-np.mean(logp_teacher))
    V = baseline.forward(len(batch))
    parts["baseline_loss"] = float(np.mean((batch.returns - V) ** 2))

    loss = (parts["pg_loss"] + parts["entropy_loss"] + config.imitation_weight * parts["imitation_loss"]
            + config.baseline_weight * parts["baseline_loss"])
    return loss, parts


def accumulate_surrogate_gradients(policy, baseline, batch, config):
    """Add the gradient of `surrogate_loss` to the policy and baseline gradients."""

    count = len(batch)
    _, _, cache = policy.evaluate(batch.observations, batch.actions)
    policy.backward(cache, -batch.advantages / count, -config.entropy_weight / count)

    if _imitating(batch, config):
        _, _, cache = policy.evaluate(batch.observations, batch.teacher_actions)
        policy.backward(cache, np.full(count, -config.imitation_weight / count), 0.0)

    V = baseline.forward(count)
    baseline.backward(-2.0 * config.baseline_weight * (batch.returns - V) / count)


def pg_update(policy, baseline, batch, config, optimizer):
    """One learner step on a rollout batch; returns diagnostics."""

    loss, parts = surrogate_loss(policy, baseline, batch, config)
    optimizer.zero_grad()
    accumulate_surrogate_gradients(policy, baseline, batch, config)
    optimizer.step()

    diagnostics = dict(loss=loss, mean_return=float(np.mean(batch.returns)), **parts)
    if batch.teacher_actions is not None:
        agree = sum(a == b for a, b in zip(batch.actions, batch.teacher_actions))
        diagnostics["imitation_agreement"] = agree / max(len(batch), 1)
    else:
        diagnostics["imitation_agreement"] = float("nan")
    diagnostics["episodes"] = len(batch.episodes)
    if batch.episodes:
        diagnostics["episode_length"] = float(np.mean([e[0] for e in batch.episodes]))
        diagnostics["episode_solve_rate"] = 100.0 * float(np.mean([e[1] for e in batch.episodes]))
    else:
        diagnostics["episode_length"] = diagnostics["episode_solve_rate"] = float("nan")
    return diagnostics


def make_actors(config, seed, teacher=None):
    return [Actor(config, rng, teacher) for rng in _streams(seed, config.num_actors, 1)]


def train_rl(config, policy=None, baseline=None, threads=1, log_path=None, progress=True):
    """Actor/learner policy gradient with a scalar baseline, entropy bonus and,
    when enabled, the imitation term towards `config.teacher`."""

    seed = _seed_of(config)
    init_rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    policy = new_policy(config.interface, init_rng) if policy is None else policy
    baseline = ValueBaseline() if baseline is None else baseline
    optimizer = Adam([policy, baseline], config.learning_rate)

    teacher = make_agent(config.teacher, config.interface) if config.imitation else None
    actors = make_actors(config, seed, teacher)

    logger.info("Training %s on %s for %d update(s): %d actor(s) x %d steps, lr=%g gamma=%g entropy=%g%s",
                policy.kind, config.interface, config.updates, config.num_actors, config.n_steps,
                config.learning_rate, config.gamma, config.entropy_weight,
                f", imitating {config.teacher}" if teacher else "")

    history = []
    best = None
    for update in tqdm.tqdm(range(1, config.updates + 1), desc="Progress", unit=" update", colour="green",
                            file=sys.stderr, disable=not progress):
        batch = collect_rollouts(policy, baseline, actors, config, threads)
        row = dict(update=update, **pg_update(policy, baseline, batch, config, optimizer))
        row["solve_rate"] = row["mean_length"] = float("nan")
        if update % config.eval_interval == 0 or update == config.updates:
            row["solve_rate"], row["mean_length"] = validate_policy(policy, config, threads)
            best = _better(best, policy, baseline, row)
            logger.debug("update %d: solve %.1f%%, mean length %.1f", update, row["solve_rate"], row["mean_length"])
        _append_log(log_path, row)
        history.append(row)

    return TrainResult(policy, baseline, pd.DataFrame(history), best)


################################################################################
# Sweeps

def sweep_cells(grid):
    """Every combination of the grid's values, in a fixed key order."""
    keys = [k for k in SWEEP_KEYS if k in grid]
    unknown = set(grid) - set(SWEEP_KEYS)
    if unknown:
        raise ConfigError(f"Cannot sweep over {sorted(unknown)}; sweepable keys are {', '.join(SWEEP_KEYS)}")
    return [dict(zip(keys, values)) for values in itertools.product(*[grid[k] for k in keys])]


def check_grid(interface, grid):
    allowed = SWEEP_GRID[interface]
    for key, values in grid.items():
        off = [v for v in values if v not in allowed.get(key, [])]
        if off:
            raise ConfigError(f"{key} values {off} are outside the sweep set {allowed.get(key)} for {interface}")


SweepResult = collections.namedtuple("SweepResult", ["leaderboard", "curves"])

LEADERBOARD_COLUMNS = ["cell", *SWEEP_KEYS, "seed", "solve_rate", "mean_length", "cell_solve_rate",
                       "cell_mean_length", "rank"]


def run_sweep(config, grid, seeds, updates=None, threads=1, run_dir=None, allow_off_grid=False, progress=True):
    """Train every grid cell for every seed and rank the cells.

    Cells are ranked by validation mean episode length (mean over seeds,
    higher solve rate first). With `run_dir` the best seed's parameters of
    each cell are saved under `<run_dir>/cell-<k>/`.

    :return: SweepResult(leaderboard frame, {cell: frame of validation curves per seed})"""

    if not allow_off_grid:
        check_grid(config.interface, grid)
    cells = sweep_cells(grid)
    seeds = list(seeds)
    if not cells or not seeds:
        logger.info("Nothing to sweep")
        return SweepResult(pd.DataFrame(columns=LEADERBOARD_COLUMNS), {})

    logger.info("Sweeping %d cell(s) x %d seed(s) on %s", len(cells), len(seeds), config.interface)
    rows = []
    curves = {}
    for c, cell in enumerate(tqdm.tqdm(cells, desc="Progress", unit=" cell", colour="green", file=sys.stderr,
                                       disable=not progress)):
        best_seed = None
        seed_curves = {}
        for seed in seeds:
            overrides = dict(cell, seed=seed)
            if updates is not None:
                overrides["updates"] = updates
            cfg = config.copy(**overrides)
            result = train_rl(cfg, threads=threads, progress=False)

            evaluated = result.history.dropna(subset=["mean_length"])
            last = evaluated.iloc[-1]
            seed_curves[seed] = evaluated.set_index("update")["mean_length"]
            # Keys the grid leaves out keep the base config value.
            rows.append(dict(cell=c, seed=seed, solve_rate=float(last["solve_rate"]),
                             mean_length=float(last["mean_length"]), **{k: getattr(cfg, k) for k in SWEEP_KEYS}))

            key = (-rows[-1]["solve_rate"], rows[-1]["mean_length"])
            if best_seed is None or key < best_seed[0]:
                best_seed = (key, result)

        curves[c] = pd.DataFrame(seed_curves)
        if run_dir is not None:
            cell_dir = os.path.join(run_dir, f"cell-{c}")
            os.makedirs(cell_dir, exist_ok=True)
            result = best_seed[1]
            save_checkpoint(os.path.join(cell_dir, CHECKPOINT_NAME), result.policy, result.baseline,
                            metadata=dict(cell=cell, config=config.copy(**cell).to_dict()))

    board = pd.DataFrame(rows)
    per_cell = board.groupby("cell").agg(cell_solve_rate=("solve_rate", "mean"),
                                         cell_mean_length=("mean_length", "mean"))
    per_cell = per_cell.sort_values(["cell_solve_rate", "cell_mean_length"], ascending=[False, True])
    per_cell["rank"] = np.arange(1, len(per_cell) + 1)
    board = board.join(per_cell, on="cell").sort_values(["rank", "seed"]).reset_index(drop=True)
    return SweepResult(board[LEADERBOARD_COLUMNS], curves)


def plot_training_curves(curves, grid_cells, path, reference_length=None):
    """Validation mean episode length against update for every cell: mean
    across seeds (solid) and best across seeds (dashed)."""

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 5))
    for c, frame in curves.items():
        label = ", ".join(f"{k}={v}" for k, v in grid_cells[c].items())
        line, = ax.plot(frame.index, frame.mean(axis=1), label=f"mean [{label}]")
        ax.plot(frame.index, frame.min(axis=1), linestyle="--", color=line.get_color())
    if reference_length is not None:
        ax.axhline(reference_length, color="black", linestyle=":", label="teacher")
    ax.set_xlabel("update")
    ax.set_ylabel("validation mean episode length")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
