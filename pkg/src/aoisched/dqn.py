"""Deep Q-learning scheduler with a small NumPy multilayer perceptron.

The network maps the encoded state (normalised large-scale gains and
demand-masked ages) to one Q-value per joint assignment in the restricted
action space. Gradients are derived by hand; there is no autodiff dependency.
"""

from __future__ import annotations

import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

from ._validation import ValidationError, check_positive_int, check_probability, check_rng, check_zeta
from .aoi import AoiState, slot_reward, step_aoi
from .base import BaseScheduler
from .scenario import large_scale_gain
from .simulate import ActionSpace, power_cache, replay

REFERENCE_DISTANCE = 100.0
CHECKPOINT_VERSION = 1


# --- state encoding -------------------------------------------------------

def encode_state(aoi_state: AoiState, channel, scenario) -> np.ndarray:
    """Flatten per-vehicle ``[chi_i, r_i1*age_i1, ..., r_iF*age_iF]``.

    ``chi`` is divided by its value at 100 m; ages by the horizon length.
    """
    chi_ref = large_scale_gain(REFERENCE_DISTANCE, scenario.fc, scenario.c0)
    ages = scenario.demand * aoi_state.age / scenario.T
    return np.column_stack([channel.chi / chi_ref, ages]).ravel()


def decode_state(vec, V: int, F: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`encode_state`: normalised gains and masked ages."""
    m = np.asarray(vec).reshape(V, F + 1)
    return m[:, 0].copy(), m[:, 1:].copy()


# --- network --------------------------------------------------------------

class QNetwork:
    """Fully connected network, ReLU hidden layers and a linear output layer.

    ``input_scale`` is an optional fixed per-feature divisor applied to the
    input before the first layer; it is not trained.
    """

    def __init__(self, sizes, rng=None, zero=False, input_scale=None):
        self.sizes = [int(s) for s in sizes]
        if len(self.sizes) < 2:
            raise ValidationError("need at least input and output sizes")
        self.input_scale = None
        if input_scale is not None:
            scale = np.asarray(input_scale, dtype=float)
            if scale.shape != (self.sizes[0],) or np.any(scale <= 0):
                raise ValidationError("input_scale needs one positive entry per input")
            self.input_scale = scale
        rng = check_rng(rng)
        self.W, self.b = [], []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            if zero:
                self.W.append(np.zeros((fan_in, fan_out)))
            else:
                self.W.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
            self.b.append(np.zeros(fan_out))

    @property
    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.W, self.b) for p in pair]

    def copy(self) -> "QNetwork":
        out = QNetwork.__new__(QNetwork)
        out.sizes = list(self.sizes)
        out.input_scale = None if self.input_scale is None else self.input_scale.copy()
        out.W = [w.copy() for w in self.W]
        out.b = [b.copy() for b in self.b]
        return out

    def forward(self, X, keep=False):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.input_scale is not None:
            X = X / self.input_scale
        acts = [X]
        a = X
        last = len(self.W) - 1
        for k, (W, b) in enumerate(zip(self.W, self.b)):
            z = a @ W + b
            a = z if k == last else np.maximum(z, 0.0)
            acts.append(a)
        return (a, acts) if keep else a

    def __call__(self, X):
        return self.forward(X)

    def backward(self, acts, grad_out):
        """Parameter gradients given dLoss/dOutput; same order as :attr:`params`."""
        grads = []
        delta = grad_out
        for k in range(len(self.W) - 1, -1, -1):
            a_prev = acts[k]
            gW = a_prev.T @ delta
            gb = delta.sum(axis=0)
            grads.append((gW, gb))
            if k:
                delta = (delta @ self.W[k].T) * (acts[k] > 0)
        out = []
        for gW, gb in reversed(grads):
            out += [gW, gb]
        return out

    # checkpoint: JSON header line followed by row-major float64 arrays
    def save(self, path_or_buffer):
        scale = None if self.input_scale is None else self.input_scale.tolist()
        header = json.dumps({"version": CHECKPOINT_VERSION, "sizes": self.sizes, "input_scale": scale}).encode()
        payload = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in self.params)
        data = header + b"\n" + payload
        if hasattr(path_or_buffer, "write"):
            path_or_buffer.write(data)
        else:
            with open(path_or_buffer, "wb") as fh:
                fh.write(data)

    @classmethod
    def load(cls, path_or_buffer) -> "QNetwork":
        if hasattr(path_or_buffer, "read"):
            data = path_or_buffer.read()
        else:
            with open(path_or_buffer, "rb") as fh:
                data = fh.read()
        head, _, payload = data.partition(b"\n")
        meta = json.loads(head)
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValidationError(f"unsupported checkpoint version {meta.get('version')}")
        net = cls(meta["sizes"], zero=True, input_scale=meta.get("input_scale"))
        buf = io.BytesIO(payload)
        for p in net.params:
            p[...] = np.frombuffer(buf.read(p.size * 8), dtype="<f8").reshape(p.shape)
        return net


# --- replay buffer --------------------------------------------------------

class ReplayBuffer:
    """Fixed-capacity ring of transitions; the oldest entry is overwritten first."""

    def __init__(self, capacity: int, state_dim: int):
        self.capacity = check_positive_int(capacity, "capacity")
        self.s = np.zeros((self.capacity, state_dim))
        self.a = np.zeros(self.capacity, dtype=np.int64)
        self.r = np.zeros(self.capacity)
        self.s2 = np.zeros((self.capacity, state_dim))
        self.done = np.zeros(self.capacity, dtype=bool)
        self._next = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, s, a, r, s2, done):
        k = self._next
        self.s[k], self.a[k], self.r[k], self.s2[k], self.done[k] = s, a, r, s2, done
        self._next = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, M: int, rng):
        if M > self.size:
            raise ValidationError(f"batch of {M} requested from {self.size} transitions")
        idx = rng.choice(self.size, size=M, replace=False)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.done[idx])


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s2: np.ndarray
    done: np.ndarray


# --- learning -------------------------------------------------------------

def act_epsilon_greedy(net: QNetwork, state, epsilon: float, rng) -> int:
    """Uniform random action with probability ``epsilon``, else the first argmax."""
    check_probability(epsilon, "epsilon", closed=True)
    n_actions = net.sizes[-1]
    if epsilon > 0 and rng.uniform() < epsilon:
        return int(rng.integers(n_actions))
    return int(np.argmax(net(state)[0]))


def td_targets(batch: Batch, target_net: QNetwork, discount: float, online_net: QNetwork | None = None) -> np.ndarray:
    """``r + discount * max_a Q(s', a)``, reward only at terminal transitions.

    With ``online_net`` the bootstrap action is chosen by the online network
    and valued by ``target_net`` (double Q-learning).
    """
    q2 = target_net(batch.s2)
    if online_net is None:
        boot = q2.max(axis=1)
    else:
        boot = q2[np.arange(len(q2)), np.argmax(online_net(batch.s2), axis=1)]
    return batch.r + discount * np.where(batch.done, 0.0, boot)


def loss_and_grads(net: QNetwork, batch: Batch, targets):
    """Mean squared TD error on the taken actions and its parameter gradients."""
    q, acts = net.forward(batch.s, keep=True)
    M = len(batch.a)
    rows = np.arange(M)
    err = q[rows, batch.a] - targets
    loss = float(np.mean(err**2))
    grad_out = np.zeros_like(q)
    grad_out[rows, batch.a] = 2.0 * err / M
    return loss, net.backward(acts, grad_out)


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.k = 0

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.k += 1
        c1 = 1 - self.beta1**self.k
        c2 = 1 - self.beta2**self.k
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(name: str, lr: float):
    if name == "sgd":
        return SGD(lr)
    if name == "adam":
        return Adam(lr)
    raise ValidationError(f"unknown optimizer {name!r}")


def train_step(net: QNetwork, batch: Batch, discount: float, learning_rate: float = None,
               optimizer=None, target_net: QNetwork | None = None, double_q: bool = False) -> float:
    """One gradient step on the squared TD error; returns the pre-step loss.

    Targets bootstrap from ``target_net`` (the online network when None)
    and are held constant during differentiation.
    """
    if optimizer is None:
        optimizer = SGD(learning_rate)
    tnet = net if target_net is None else target_net
    targets = td_targets(batch, tnet, discount, net if double_q and target_net is not None else None)
    loss, grads = loss_and_grads(net, batch, targets)
    optimizer.step(net.params, grads)
    return loss


# --- environment ----------------------------------------------------------

class SchedulingEnv:
    """One scenario as an episodic MDP over T slots.

    Infeasible assignments are executed as an idle slot: no age reset and
    zero power.
    """

    def __init__(self, scenario, zeta: float = 0.5, nu: float = 1e-6, time_feature: bool = False):
        self.scenario = scenario
        self.zeta = check_zeta(zeta)
        self.nu = nu
        self.time_feature = bool(time_feature)
        self.space = ActionSpace(scenario.demand)
        self.cache = power_cache(scenario)
        self.state_dim = scenario.V * (scenario.F + 1) + self.time_feature
        self.reset()

    @classmethod
    def for_network(cls, net: "QNetwork", scenario, zeta: float = 0.5, nu: float = 1e-6):
        """Environment whose observations match the network's input width."""
        base = scenario.V * (scenario.F + 1)
        if net.sizes[0] not in (base, base + 1):
            raise ValidationError(f"network expects {net.sizes[0]} inputs, scenario encodes {base}")
        return cls(scenario, zeta, nu, time_feature=net.sizes[0] == base + 1)

    @property
    def n_actions(self) -> int:
        return self.space.size

    def observe(self) -> np.ndarray:
        t = min(self.aoi.t + 1, self.scenario.T)
        vec = encode_state(self.aoi, self.scenario.channels[t - 1], self.scenario)
        if self.time_feature:
            vec = np.append(vec, self.aoi.t / self.scenario.T)
        return vec

    def reset(self) -> np.ndarray:
        s = self.scenario
        self.aoi = AoiState.initial(s.V, s.F, s.delta)
        self.power_history = []
        self.schedule, self.powers = [], []
        return self.observe()

    def step(self, action: int):
        s = self.scenario
        t = self.aoi.t + 1
        mu = self.space.decode(action)
        sol = self.cache.solve(t, mu)
        if sol.feasible:
            p = sol.p
            success = mu > 0
        else:
            mu = np.zeros_like(mu)
            p = np.zeros(s.F)
            success = np.zeros(s.V, dtype=bool)
        self.aoi = step_aoi(self.aoi, mu, success, s.demand)
        self.power_history.append(float(p.sum()))
        self.schedule.append(mu)
        self.powers.append(p)
        reward = slot_reward(self.aoi, self.power_history, s, self.zeta, self.nu)
        done = self.aoi.t == s.T
        return self.observe(), reward, done, {"feasible": sol.feasible, "mu": mu}

    def result(self, meta=None):
        return replay(self.scenario, np.array(self.schedule), np.array(self.powers), self.zeta, meta)


@dataclass
class TrainingLog:
    transitions: list = field(default_factory=list)  # (episode, t, action, reward, done)
    episodes: list = field(default_factory=list)  # dicts, see train_agent

    def episodes_csv(self) -> str:
        lines = ["episode,epsilon,meanLoss,episodeReward,objective"]
        for e in self.episodes:
            lines.append(
                f"{e['episode']},{e['epsilon']:.12g},{e['mean_loss']:.12g},"
                f"{e['reward']:.12g},{e['objective']:.12g}"
            )
        return "\n".join(lines) + "\n"


@dataclass
class DQNConfig:
    episodes: int = 2000
    hidden: tuple = (128, 128)
    discount: float = 0.95
    learning_rate: float = 1e-3
    buffer_size: int = 10_000
    batch_size: int = 64
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    anneal_fraction: float = 0.8
    nu: float = 1e-6
    optimizer: str = "adam"
    target_sync: int | None = 200  # steps between target-network syncs; None = online targets
    double_q: bool = True  # needs target_sync
    updates_per_step: int = 2
    time_feature: bool = False  # append elapsed slots / T to the state
    scale_inputs: bool = True  # divide gain features by their largest value over the horizon
    eval_every: int | None = None  # episodes between greedy evaluations recorded in the log
    seed: int | None = None


def input_scale(env: "SchedulingEnv") -> np.ndarray:
    """Per-feature divisors: each vehicle's gain feature by its horizon maximum, ages by 1.

    The encoded gains span about two orders of magnitude as vehicles pass
    the roadside unit; rescaling keeps the first layer well conditioned.
    """
    s = env.scenario
    chi_ref = large_scale_gain(REFERENCE_DISTANCE, s.fc, s.c0)
    peak = np.max([ch.chi for ch in s.channels], axis=0) / chi_ref
    scale = np.ones((s.V, s.F + 1))
    scale[:, 0] = peak
    return np.append(scale.ravel(), np.ones(env.state_dim - scale.size))


def epsilon_schedule(episode: int, cfg: DQNConfig) -> float:
    """Linear decay from ``epsilon_start`` to ``epsilon_end`` over the annealing fraction."""
    span = max(1, int(round(cfg.anneal_fraction * cfg.episodes)))
    frac = min(1.0, episode / span)
    return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start)


def train_agent(scenario, zeta: float = 0.5, config: DQNConfig | None = None, **overrides):
    """Train a Q-network on one scenario; returns ``(net, log)``."""
    cfg = config or DQNConfig()
    if overrides:
        cfg = DQNConfig(**{**cfg.__dict__, **overrides})
    check_positive_int(cfg.episodes, "episodes")
    rng = np.random.default_rng(cfg.seed)
    check_positive_int(cfg.updates_per_step, "updates_per_step")
    env = SchedulingEnv(scenario, zeta, cfg.nu, cfg.time_feature)
    net = QNetwork(
        [env.state_dim, *cfg.hidden, env.n_actions], rng,
        input_scale=input_scale(env) if cfg.scale_inputs else None,
    )
    target = net.copy() if cfg.target_sync else None
    opt = make_optimizer(cfg.optimizer, cfg.learning_rate)
    buf = ReplayBuffer(cfg.buffer_size, env.state_dim)
    log = TrainingLog()
    steps = 0
    for ep in range(cfg.episodes):
        eps = epsilon_schedule(ep, cfg)
        s = env.reset()
        losses, total = [], 0.0
        done = False
        while not done:
            a = act_epsilon_greedy(net, s, eps, rng)
            s2, r, done, _ = env.step(a)
            buf.add(s, a, r, s2, done)
            log.transitions.append((ep, env.aoi.t, a, r, done))
            total += r
            s = s2
            for _ in range(cfg.updates_per_step if len(buf) >= cfg.batch_size else 0):
                batch = buf.sample(cfg.batch_size, rng)
                losses.append(
                    train_step(net, batch, cfg.discount, optimizer=opt, target_net=target, double_q=cfg.double_q)
                )
                steps += 1
                if target is not None and steps % cfg.target_sync == 0:
                    target = net.copy()
        log.episodes.append(
            {
                "episode": ep + 1,
                "epsilon": eps,
                "mean_loss": float(np.mean(losses)) if losses else float("nan"),
                "reward": total,
                "objective": env.result().objective,
            }
        )
        if cfg.eval_every and (ep + 1) % cfg.eval_every == 0:
            log.episodes[-1]["greedy_objective"] = greedy_rollout(net, scenario, zeta, cfg.nu).objective
    return net, log


def greedy_rollout(net: QNetwork, scenario, zeta: float = 0.5, nu: float = 1e-6):
    env = SchedulingEnv.for_network(net, scenario, zeta, nu)
    s = env.reset()
    done = False
    while not done:
        s, _, done, _ = env.step(int(np.argmax(net(s)[0])))
    return env.result(meta={"solver": "dqn"})


def evaluate_policy(net: QNetwork, scenario, episodes: int = 1, zeta: float = 0.5,
                    epsilon: float = 0.0, seed=None) -> dict:
    """Roll out the (epsilon-)greedy policy and summarise the objective terms."""
    rng = np.random.default_rng(seed)
    env = SchedulingEnv.for_network(net, scenario, zeta)
    objs, aois, pows = [], [], []
    for _ in range(check_positive_int(episodes, "episodes")):
        s = env.reset()
        done = False
        while not done:
            s, _, done, _ = env.step(act_epsilon_greedy(net, s, epsilon, rng))
        b = env.result().breakdown
        objs.append(b.value)
        aois.append(b.avg_aoi)
        pows.append(b.avg_power)
    return {
        "objective_mean": float(np.mean(objs)),
        "objective_std": float(np.std(objs)),
        "avg_aoi_mean": float(np.mean(aois)),
        "avg_power_mean": float(np.mean(pows)),
        "episodes": len(objs),
    }


class DQNScheduler(BaseScheduler):
    """Q-learning scheduler; ``fit`` trains on a scenario, ``predict`` rolls out greedily."""

    def __init__(self, zeta=0.5, episodes=2000, hidden=(128, 128), discount=0.95,
                 learning_rate=1e-3, buffer_size=10_000, batch_size=64, optimizer="adam",
                 target_sync=200, double_q=True, updates_per_step=2, time_feature=False,
                 scale_inputs=True, random_state=None):
        self.zeta = zeta
        self.episodes = episodes
        self.hidden = hidden
        self.discount = discount
        self.learning_rate = learning_rate
        self.buffer_size = buffer_size
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.target_sync = target_sync
        self.double_q = double_q
        self.updates_per_step = updates_per_step
        self.time_feature = time_feature
        self.scale_inputs = scale_inputs
        self.random_state = random_state

    def fit(self, scenario, y=None):
        scenario = self._validate(scenario)
        t0 = time.perf_counter()
        cfg = DQNConfig(
            episodes=self.episodes,
            hidden=tuple(self.hidden),
            discount=self.discount,
            learning_rate=self.learning_rate,
            buffer_size=self.buffer_size,
            batch_size=self.batch_size,
            optimizer=self.optimizer,
            target_sync=self.target_sync,
            double_q=self.double_q,
            updates_per_step=self.updates_per_step,
            time_feature=self.time_feature,
            scale_inputs=self.scale_inputs,
            seed=self.random_state,
        )
        self.network_, self.log_ = train_agent(scenario, self.zeta, cfg)
        self.result_ = greedy_rollout(self.network_, scenario, self.zeta)
        self.result_.meta["wall_time"] = time.perf_counter() - t0
        return self

    def predict(self, scenario):
        """Greedy schedule of the trained network on ``scenario``."""
        from sklearn.utils.validation import check_is_fitted

        check_is_fitted(self, "network_")
        return greedy_rollout(self.network_, scenario, self.zeta).schedule
