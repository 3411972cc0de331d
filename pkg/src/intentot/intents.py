"""Tabular intent representation learning.

A trilinear value model V(s, s+, z) = phi(s)^T T(z) psi(s+), with T(z)
affine in z, is trained by expectile-weighted temporal-difference
regression so that distances between psi rows track step counts. The psi
row of a state is its intent embedding, consumed by the OT alignment.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .expectile import expectile_weight


class SamplingError(ValueError):
    """Dataset unusable for batch sampling (length-1 trajectory)."""


class DivergenceError(RuntimeError):
    """Non-finite loss encountered during training."""


@dataclass
class IntentModel:
    """phi/psi embedding tables plus the affine transition operator.

    t_factors is stacked [d, d, d]: T(z) = t_base + sum_k z[k] * t_factors[k].
    """

    phi: np.ndarray
    psi: np.ndarray
    t_base: np.ndarray
    t_factors: np.ndarray

    @property
    def d(self) -> int:
        return self.phi.shape[1]

    @property
    def n_states(self) -> int:
        return self.phi.shape[0]

    def copy(self) -> "IntentModel":
        return IntentModel(self.phi.copy(), self.psi.copy(),
                           self.t_base.copy(), self.t_factors.copy())


@dataclass
class IntentGradients:
    phi: np.ndarray
    psi: np.ndarray
    t_base: np.ndarray
    t_factors: np.ndarray


@dataclass(frozen=True)
class IntentTrainConfig:
    d: int = 8
    gamma: float = 0.99
    expectile: float = 0.9
    learning_rate: float = 0.05
    target_update_period: int = 100
    steps: int = 20000
    batch_size: int = 128
    future_geometric_p: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0.0 < self.expectile < 1.0:
            raise ValueError(f"expectile must be in (0, 1), got {self.expectile}")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.target_update_period < 1:
            raise ValueError("target_update_period must be positive")
        if self.steps < 0 or self.batch_size < 1 or self.d < 1:
            raise ValueError("steps/batch_size/d out of range")
        if not 0.0 < self.future_geometric_p <= 1.0:
            raise ValueError("future_geometric_p must be in (0, 1]")


@dataclass(frozen=True)
class IntentBatchItem:
    """Sampled (s, s', s+, s_z) positions, all from one trajectory."""

    s: int
    s_next: int
    s_plus: int
    s_z: int


def transition_operator(model: IntentModel, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (model.d,):
        raise ValueError(f"z has shape {z.shape}, expected ({model.d},)")
    return model.t_base + np.einsum("k,kij->ij", z, model.t_factors)


def value(model: IntentModel, s: int, s_plus: int, z: np.ndarray) -> float:
    """Trilinear contraction phi(s)^T T(z) psi(s+)."""
    if not (0 <= s < model.n_states and 0 <= s_plus < model.n_states):
        raise ValueError("state id out of range")
    return float(model.phi[s] @ transition_operator(model, z) @ model.psi[s_plus])


def embed(model: IntentModel, state: int) -> np.ndarray:
    """Intent of a state: its psi row."""
    if not 0 <= state < model.n_states:
        raise ValueError(f"state id {state} out of range")
    return model.psi[state].copy()


class _TrajectoryIndex:
    """Flat position arrays for O(1) vectorized batch sampling."""

    def __init__(self, dataset: Dataset):
        for i, traj in enumerate(dataset.trajectories):
            if len(traj) < 2:
                raise SamplingError(f"trajectory {i} has length 1, cannot sample")
        self.states = np.concatenate(
            [np.asarray(t.states, dtype=np.int64) for t in dataset.trajectories])
        pos, remaining = [], []
        offset = 0
        for traj in dataset.trajectories:
            n = len(traj)
            pos.append(np.arange(offset, offset + n - 1))
            remaining.append(np.arange(n - 1, 0, -1))
            offset += n
        self.positions = np.concatenate(pos)          # flat index of each non-terminal s
        self.remaining = np.concatenate(remaining)    # steps left to trajectory end

    def sample(self, rng: np.random.Generator, batch_size: int, p: float):
        pick = rng.integers(len(self.positions), size=batch_size)
        flat = self.positions[pick]
        cap = self.remaining[pick]
        off_plus = np.minimum(rng.geometric(p, size=batch_size) - 1, cap)
        off_z = np.minimum(rng.geometric(p, size=batch_size) - 1, cap)
        return (self.states[flat], self.states[flat + 1],
                self.states[flat + off_plus], self.states[flat + off_z])


def sample_batch(dataset: Dataset, config: IntentTrainConfig,
                 rng: np.random.Generator) -> list[IntentBatchItem]:
    """Uniform s over non-terminal positions; s+ and s_z at truncated
    geometric offsets (support 0, 1, ...) clipped to the trajectory end."""
    index = _TrajectoryIndex(dataset)
    s, s_next, s_plus, s_z = index.sample(rng, config.batch_size,
                                          config.future_geometric_p)
    return [IntentBatchItem(int(a), int(b), int(c), int(e))
            for a, b, c, e in zip(s, s_next, s_plus, s_z)]


def _loss_and_grads_arrays(model: IntentModel, target: IntentModel,
                           s, s_next, s_plus, s_z,
                           gamma: float, expectile: float):
    z = target.psi[s_z]  # intents come from the target table, no gradient
    tz = model.t_base + np.einsum("bk,kij->bij", z, model.t_factors)
    tz_bar = target.t_base + np.einsum("bk,kij->bij", z, target.t_factors)
    phi_s = model.phi[s]
    psi_plus = model.psi[s_plus]
    psi_plus_bar = target.psi[s_plus]

    v = np.einsum("bi,bij,bj->b", phi_s, tz, psi_plus)
    v_bar_next = np.einsum("bi,bij,bj->b", target.phi[s_next], tz_bar, psi_plus_bar)
    v_bar_cur = np.einsum("bi,bij,bj->b", target.phi[s], tz_bar, psi_plus_bar)

    # Reaching s+ is absorbing: the bootstrap term is masked once s == s+,
    # which pins V(s, s, z) at the zero fixed point.
    not_goal = (s != s_plus).astype(float)
    u = -not_goal + gamma * not_goal * v_bar_next - v
    adv = -(s != s_z).astype(float) + gamma * v_bar_next - v_bar_cur
    w = expectile_weight(expectile, adv)
    batch = len(u)
    loss = float(np.mean(w * u * u))

    coef = -2.0 * w * u / batch  # dLoss/dV per item
    g_phi = np.zeros_like(model.phi)
    g_psi = np.zeros_like(model.psi)
    np.add.at(g_phi, s, coef[:, None] * np.einsum("bij,bj->bi", tz, psi_plus))
    np.add.at(g_psi, s_plus, coef[:, None] * np.einsum("bi,bij->bj", phi_s, tz))
    outer = coef[:, None, None] * phi_s[:, :, None] * psi_plus[:, None, :]
    g_t_base = outer.sum(axis=0)
    g_t_factors = np.einsum("bk,bij->kij", z, outer)
    return loss, IntentGradients(g_phi, g_psi, g_t_base, g_t_factors)


def icvf_loss_and_grads(model: IntentModel, target_model: IntentModel,
                        batch: list[IntentBatchItem], gamma: float,
                        expectile: float):
    """Expectile temporal-distance loss and its analytic gradients.

    Gradients flow only through the online value; the target model and
    the intents read from its psi table are constants.
    """
    if model.d != target_model.d or model.n_states != target_model.n_states:
        raise ValueError("online and target models must share shapes")
    s = np.array([b.s for b in batch])
    s_next = np.array([b.s_next for b in batch])
    s_plus = np.array([b.s_plus for b in batch])
    s_z = np.array([b.s_z for b in batch])
    return _loss_and_grads_arrays(model, target_model, s, s_next, s_plus, s_z,
                                  gamma, expectile)


def init_intent_model(n_states: int, d: int, rng: np.random.Generator) -> IntentModel:
    u = lambda *shape: rng.uniform(-0.1, 0.1, size=shape)
    return IntentModel(phi=u(n_states, d), psi=u(n_states, d),
                       t_base=u(d, d), t_factors=u(d, d, d))


def train_intents(dataset: Dataset, config: IntentTrainConfig) -> IntentModel:
    """Plain SGD on the expectile temporal-distance loss.

    Deterministic given (dataset, config). The target model is a hard
    copy refreshed every target_update_period steps. The step size
    follows a fixed two-phase schedule derived from learning_rate:
    the first quarter of the steps runs at three times learning_rate,
    then the rate decays exponentially from learning_rate to one tenth
    of it. The initial burst pushes the small random initialization out
    of its near-zero gradient plateau on every seed, and the decay
    suppresses late-training SGD noise that otherwise leaves the
    embedding geometry seed-dependent.
    """
    rng = np.random.default_rng(config.seed)
    model = init_intent_model(dataset.meta.n_states, config.d, rng)
    if config.steps == 0:
        return model
    index = _TrajectoryIndex(dataset)
    target = model.copy()
    burst = config.steps // 4
    for step in range(config.steps):
        if step < burst:
            lr = 3.0 * config.learning_rate
        else:
            lr = config.learning_rate * 0.1 ** ((step - burst)
                                                / (config.steps - burst))
        if step % config.target_update_period == 0:
            target = model.copy()
        s, s_next, s_plus, s_z = index.sample(rng, config.batch_size,
                                              config.future_geometric_p)
        loss, grads = _loss_and_grads_arrays(model, target, s, s_next, s_plus,
                                             s_z, config.gamma, config.expectile)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at step {step}")
        model.phi -= lr * grads.phi
        model.psi -= lr * grads.psi
        model.t_base -= lr * grads.t_base
        model.t_factors -= lr * grads.t_factors
    return model


def temporal_linearity_report(model: IntentModel, dataset: Dataset,
                              k_max: int) -> list[tuple[int, float, float]]:
    """Mean squared intent / one-hot state distance per step offset k.

    Returns (k, mean ||psi(s_{t+k}) - psi(s_t)||^2, mean one-hot distance)
    rows for k = 0..k_max; offsets with no pair are omitted with a warning.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    rows = []
    for k in range(k_max + 1):
        intent_sum = state_sum = 0.0
        count = 0
        for traj in dataset.trajectories:
            if len(traj) <= k:
                continue
            states = np.asarray(traj.states)
            a, b = states[: len(states) - k], states[k:]
            diff = model.psi[b] - model.psi[a]
            intent_sum += float(np.sum(diff * diff))
            state_sum += float(2.0 * np.sum(a != b))  # one-hot squared distance
            count += len(a)
        if count == 0:
            warnings.warn(f"no state pair at offset k={k}; row omitted")
            continue
        rows.append((k, intent_sum / count, state_sum / count))
    return rows


def linearity_pearson(rows: list[tuple[int, float, float]]) -> float:
    """Pearson correlation between k and the intent column over k >= 1."""
    ks = np.array([r[0] for r in rows if r[0] >= 1], dtype=float)
    vals = np.array([r[1] for r in rows if r[0] >= 1])
    if len(ks) < 2 or np.allclose(vals, vals[0]):
        return 0.0
    return float(np.corrcoef(ks, vals)[0, 1])


def write_linearity_csv(rows, path, footer_pearson: bool = False) -> None:
    with open(path, "w") as fh:
        fh.write("k,intent_sq_dist,state_sq_dist\n")
        for k, intent_sq, state_sq in rows:
            fh.write(f"{k},{intent_sq!r},{state_sq!r}\n")
        if footer_pearson:
            fh.write(f"pearson_r,{linearity_pearson(rows)!r},\n")


@dataclass(frozen=True)
class BoundReport:
    """Empirical Lipschitz-style bound on the goal-conditioned value gap.

    The bounded quantity per pair is |V(s, s+, psi(s+)) - V(s, s, psi(s))|,
    the expression the convergence argument controls by c * delta with
    delta = ||psi(s) - psi(s+)||: the value at the goal offsets the raw
    value, so the quantity vanishes identically as delta -> 0 regardless
    of parameters. max_abs_self_value records the raw |V(s, s, psi(s))|
    over the sampled pairs as a training diagnostic.
    """

    deltas: np.ndarray
    abs_values: np.ndarray
    bound_constant: float
    zero_delta_max_abs_value: float
    max_abs_self_value: float


def value_bound_report(model: IntentModel, dataset: Dataset, n_pairs: int,
                       rng: np.random.Generator) -> BoundReport:
    """Sample state pairs and fit the smallest c with the gap <= c * delta.

    delta is the psi distance between the pair; pairs with delta = 0 are
    excluded from c and reported separately (their gap must be exactly
    zero up to float roundoff, for trained and untrained models alike).
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    deltas = np.empty(n_pairs)
    abs_values = np.empty(n_pairs)
    self_values = np.empty(n_pairs)
    n_traj = len(dataset.trajectories)
    for i in range(n_pairs):
        traj = dataset.trajectories[rng.integers(n_traj)]
        t1, t2 = rng.integers(len(traj), size=2)
        s, s_plus = traj.states[int(t1)], traj.states[int(t2)]
        deltas[i] = float(np.linalg.norm(model.psi[s] - model.psi[s_plus]))
        self_value = value(model, s, s, model.psi[s])
        abs_values[i] = abs(value(model, s, s_plus, model.psi[s_plus])
                            - self_value)
        self_values[i] = abs(self_value)
    nonzero = deltas > 0.0
    c = float(np.max(abs_values[nonzero] / deltas[nonzero])) if nonzero.any() else 0.0
    zero_max = float(np.max(abs_values[~nonzero])) if (~nonzero).any() else 0.0
    return BoundReport(deltas=deltas, abs_values=abs_values,
                       bound_constant=c, zero_delta_max_abs_value=zero_max,
                       max_abs_self_value=float(np.max(self_values)))


def write_bound_csv(report: BoundReport, path) -> None:
    with open(path, "w") as fh:
        fh.write("delta,abs_value\n")
        for d, v in zip(report.deltas, report.abs_values):
            fh.write(f"{d!r},{v!r}\n")
        fh.write(f"bound_constant,{report.bound_constant!r}\n")
        fh.write(f"zero_delta_max_abs_value,{report.zero_delta_max_abs_value!r}\n")
        fh.write(f"max_abs_self_value,{report.max_abs_self_value!r}\n")


def save_intent_model(model: IntentModel, path) -> None:
    obj = {
        "d": model.d,
        "n_states": model.n_states,
        "phi": model.phi.ravel().tolist(),
        "psi": model.psi.ravel().tolist(),
        "t_base": model.t_base.ravel().tolist(),
        "t_factors": model.t_factors.ravel().tolist(),
    }
    with open(path, "w") as fh:
        json.dump(obj, fh)
        fh.write("\n")


def load_intent_model(path) -> IntentModel:
    with open(path) as fh:
        obj = json.load(fh)
    n, d = obj["n_states"], obj["d"]
    return IntentModel(
        phi=np.array(obj["phi"]).reshape(n, d),
        psi=np.array(obj["psi"]).reshape(n, d),
        t_base=np.array(obj["t_base"]).reshape(d, d),
        t_factors=np.array(obj["t_factors"]).reshape(d, d, d),
    )
