"""Joint adaptation of source feature extractors and simplex ensemble weights.

The engine minimizes, over unlabeled target data,

    L_tot = L_ent - L_div + lambda * L_pl

where L_ent is the mean prediction entropy of the weighted ensemble, L_div the
entropy of the mean predicted class distribution, and L_pl a cross-entropy
against nearest-centroid pseudo-labels recomputed at every epoch. Classifiers
are frozen at entry; gradients flow into every feature extractor and into the
raw ensemble weights, whose sigmoid-normalized view is refreshed after each
optimizer step and always lies on the probability simplex.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .autodiff import Tape, Tensor
from .data import UnlabeledSet
from .models import accuracy, aggregate_logits, check_compatible, predict
from .optim import ParamGroup, SgdMomentum, lr_schedule

DISTANCE_MODES = ("per-source", "combined-feature")


@dataclass(frozen=True)
class AdaptationConfig:
    lambda_pl: float = 0.3
    epochs: int = 15
    batch_size: int = 32
    lr_backbone: float = 1e-3
    lr_alpha: float = 1e-2
    momentum: float = 0.9
    weight_decay: float = 1e-3
    seed: int = 0
    refinement_rounds: int = 1
    distance_mode: str = "per-source"
    use_entropy: bool = True
    use_diversity: bool = True
    assert_simplex: bool = False  # test hook: verify the invariant in-loop

    def __post_init__(self):
        if self.lambda_pl < 0.0:
            raise ValueError("lambda_pl must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.distance_mode not in DISTANCE_MODES:
            raise ValueError(f"distance_mode must be one of {DISTANCE_MODES}")
        if self.refinement_rounds < 0:
            raise ValueError("refinement rounds must be >= 0")


def _sigmoid(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def alpha_project(raw):
    """Sigmoid then normalize: always a point on the probability simplex."""
    s = _sigmoid(np.asarray(raw, dtype=np.float64))
    return s / s.sum()


class AggregationWeights:
    """Raw trainable weights plus their normalized simplex view.

    The raw vector starts at zero so the initial normalized view is exactly
    uniform. ``refresh()`` must be called after every optimizer step; the
    normalized view is what enters evaluation, centroid combination, and the
    next forward pass.
    """

    def __init__(self, n_sources):
        if n_sources < 1:
            raise ValueError("need at least one source")
        self.raw = Tensor(np.zeros(n_sources), requires_grad=True)
        self.alpha = alpha_project(self.raw.values)

    def __len__(self):
        return len(self.alpha)

    def refresh(self):
        self.alpha = alpha_project(self.raw.values)
        return self.alpha

    def on_tape(self, tape):
        """Differentiable projection raw -> simplex for one forward pass."""
        s = tape.sigmoid(self.raw)
        return tape.mul_scalar(s, tape.reciprocal(tape.sum(s)))


# -- losses -------------------------------------------------------------------

def aggregate_forward(tape, models, alpha_t, x):
    """Ensemble logits  sum_j alpha_j * logits_j  on the tape."""
    xt = Tensor(x)
    agg = None
    for j, model in enumerate(models):
        logits, _ = model.forward(tape, xt)
        weighted = tape.mul_scalar(logits, tape.index(alpha_t, j))
        agg = weighted if agg is None else tape.add(agg, weighted)
    return agg


def entropy_term(tape, logits_t):
    """Mean over the batch of -sum_k p_k log p_k of the ensemble prediction."""
    logp = tape.log_softmax(logits_t)
    p = tape.exp(logp)
    return tape.scale(tape.mean(tape.sum_axis(tape.mul(p, logp), 1)), -1.0)


def diversity_term(tape, logits_t):
    """Entropy of the mean predicted class distribution over the batch."""
    pbar = tape.mean_axis0(tape.softmax(logits_t))
    return tape.scale(tape.sum(tape.xlogx(pbar)), -1.0)


def pseudo_label_term(tape, logits_t, labels):
    """Mean cross-entropy of the ensemble prediction against hard labels."""
    b, k = logits_t.shape
    labels = np.asarray(labels)
    if len(labels) != b:
        raise ValueError(f"got {len(labels)} labels for a batch of {b}")
    onehot = np.zeros((b, k))
    onehot[np.arange(b), labels] = 1.0
    logp = tape.log_softmax(logits_t)
    return tape.scale(tape.sum(tape.mul(Tensor(onehot), logp)), -1.0 / b)


def combine_terms(tape, l_ent, l_div, l_pl, cfg):
    """L_tot = L_ent - L_div + lambda*L_pl, with ablation toggles."""
    total = None

    def accumulate(acc, term):
        return term if acc is None else tape.add(acc, term)

    if cfg.use_entropy:
        total = accumulate(total, l_ent)
    if cfg.use_diversity:
        total = accumulate(total, tape.scale(l_div, -1.0))
    if cfg.lambda_pl > 0.0:
        total = accumulate(total, tape.scale(l_pl, cfg.lambda_pl))
    if total is None:
        raise ValueError("objective has no active terms")
    return total


def objective(tape, models, weights, x, labels, cfg):
    """Full training objective on one tape; returns (L_tot, term values)."""
    alpha_t = weights.on_tape(tape)
    logits_t = aggregate_forward(tape, models, alpha_t, x)
    l_ent = entropy_term(tape, logits_t)
    l_div = diversity_term(tape, logits_t)
    l_pl = pseudo_label_term(tape, logits_t, labels)
    l_tot = combine_terms(tape, l_ent, l_div, l_pl, cfg)
    return l_tot, {"L_ent": l_ent.item(), "L_div": l_div.item(), "L_pl": l_pl.item(),
                   "L_tot": l_tot.item()}


# Convenience single-loss entry points (fresh tape, value only).

def entropy_loss(models, alpha, x):
    if len(x) == 0:
        raise ValueError("empty batch")
    tape = Tape()
    return entropy_term(tape, aggregate_forward(tape, models, Tensor(alpha), x)).item()


def diversity_loss(models, alpha, x):
    if len(x) == 0:
        raise ValueError("empty batch")
    tape = Tape()
    return diversity_term(tape, aggregate_forward(tape, models, Tensor(alpha), x)).item()


def pl_loss(models, alpha, x, labels):
    tape = Tape()
    return pseudo_label_term(
        tape, aggregate_forward(tape, models, Tensor(alpha), x), labels
    ).item()


# -- pseudo-labels --------------------------------------------------------------

@dataclass
class PseudoLabelState:
    per_source: np.ndarray  # (n, K, d) centroids in each source's feature space
    combined: np.ndarray  # (K, d), alpha-weighted combination
    labels: np.ndarray  # (N,) hard assignments
    round_index: int
    alpha: np.ndarray  # weights the combination was built with


def _source_centroids_soft(feats, probs):
    """Round-0 centroids: soft responsibilities from the source's own softmax."""
    sums, denom = kernels.weighted_feature_sums(feats, probs)
    out = np.empty_like(sums)
    filled = denom > 0.0
    out[filled] = sums[filled] / denom[filled, None]
    # a class whose probability underflowed on every sample gets the global mean
    if not filled.all():
        out[~filled] = feats.mean(axis=0)
    return out


def _source_centroids_hard(feats, labels, k, fallback):
    """Round-1 centroids: indicator weights; empty classes keep the fallback."""
    onehot = np.zeros((len(labels), k))
    onehot[np.arange(len(labels)), labels] = 1.0
    sums, denom = kernels.weighted_feature_sums(feats, onehot)
    out = fallback.copy()
    filled = denom > 0.0
    out[filled] = sums[filled] / denom[filled, None]
    return out


def assign_pseudo_labels(state, feats_stack, cfg_mode="per-source"):
    """Nearest-centroid assignment; ties break toward the smaller class index."""
    if cfg_mode == "per-source":
        dists = kernels.per_source_sqdist(feats_stack, state.per_source, state.alpha)
    else:
        mean_feat = np.einsum("j,jnd->nd", state.alpha, feats_stack)
        dists = kernels.pairwise_sqdist(mean_feat, state.combined)
    return np.argmin(dists, axis=1)


def update_pseudo_labels(models, alpha, x, refinement_rounds=1, mode="per-source"):
    """Run the centroid/assignment rounds over the whole target set.

    Round 0 weighs features by each source's own softmax; each refinement
    round re-estimates centroids from the previous hard assignment. All of
    this is plain numpy: pseudo-labels are constants for the optimizer.
    """
    k, _ = check_compatible(models)
    alpha = np.asarray(alpha, dtype=np.float64)
    feats_stack = np.stack([m.features(x) for m in models])
    per_source = np.stack([
        _source_centroids_soft(
            feats_stack[j], kernels.softmax_rows(models[j].classifier.logits(feats_stack[j]))
        )
        for j in range(len(models))
    ])
    state = PseudoLabelState(
        per_source=per_source,
        combined=np.einsum("j,jkd->kd", alpha, per_source),
        labels=np.empty(len(x), np.int64),
        round_index=0,
        alpha=alpha.copy(),
    )
    state.labels = assign_pseudo_labels(state, feats_stack, mode)
    for r in range(refinement_rounds):
        refined = np.stack([
            _source_centroids_hard(feats_stack[j], state.labels, k, state.per_source[j])
            for j in range(len(models))
        ])
        state = PseudoLabelState(
            per_source=refined,
            combined=np.einsum("j,jkd->kd", alpha, refined),
            labels=state.labels,
            round_index=r + 1,
            alpha=alpha.copy(),
        )
        state.labels = assign_pseudo_labels(state, feats_stack, mode)
    return state


# -- the adaptation loop ---------------------------------------------------------

@dataclass
class AdaptationResult:
    models: list
    weights: AggregationWeights
    metrics: list = field(default_factory=list)
    epoch_pbar: list = field(default_factory=list)  # full-set mean prediction, per epoch

    @property
    def alpha(self):
        return self.weights.alpha

    def predict(self, x):
        """Hard labels of the combined target model sum_j alpha_j theta_j."""
        return predict(aggregate_logits(self.models, self.alpha, x))


def mean_prediction(models, alpha, x):
    """Mean softmax of the weighted ensemble over a whole input set."""
    return kernels.softmax_rows(aggregate_logits(models, alpha, x)).mean(axis=0)


def _check_simplex(alpha, atol=1e-9):
    if alpha.min() < 0.0 or abs(alpha.sum() - 1.0) > atol:
        raise AssertionError(f"simplex invariant violated: {alpha}")


def adapt(models, target, cfg, eval_set=None, on_step=None, optimize_features=True):
    """Run the full adaptation loop over frozen-classifier source models.

    ``target`` must be an UnlabeledSet; labels never cross this boundary.
    ``eval_set`` is used only to report per-epoch accuracy in the metrics.
    Returns adapted clones plus the learned weights; inputs are not mutated.
    """
    if not isinstance(target, UnlabeledSet):
        raise TypeError("adaptation target must be an UnlabeledSet")
    if len(target) == 0:
        raise ValueError("target set is empty")
    check_compatible(models)
    adapted = [m.clone() for m in models]
    for m in adapted:
        m.classifier.freeze()
    weights = AggregationWeights(len(adapted))
    result = AdaptationResult(adapted, weights)
    if cfg.epochs == 0:
        return result

    groups = []
    if optimize_features:
        feat_params = [p for m in adapted for p in m.extractor.params()]
        groups.append(ParamGroup(feat_params, cfg.lr_backbone, cfg.weight_decay))
    groups.append(ParamGroup([weights.raw], cfg.lr_alpha, 0.0))  # no decay pull on raw weights
    opt = SgdMomentum(groups, momentum=cfg.momentum)

    n = len(target)
    n_batches = (n + cfg.batch_size - 1) // cfg.batch_size
    total_steps = cfg.epochs * n_batches
    step = 0
    for epoch in range(cfg.epochs):
        state = update_pseudo_labels(
            adapted, weights.alpha, target.x, cfg.refinement_rounds, cfg.distance_mode
        )
        # epoch-level mean embedding: diagnostic only; optimization uses the
        # per-batch estimate inside diversity_term
        result.epoch_pbar.append(mean_prediction(adapted, weights.alpha, target.x))
        perm = np.random.default_rng(cfg.seed * 1_000_003 + epoch).permutation(n)
        sums = {"L_ent": 0.0, "L_div": 0.0, "L_pl": 0.0, "L_tot": 0.0}
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            tape = Tape()
            l_tot, terms = objective(
                tape, adapted, weights, target.x[idx], state.labels[idx], cfg
            )
            tape.backward(l_tot)
            opt.step(lr_factor=lr_schedule(1.0, step / max(1, total_steps - 1)))
            opt.zero_grad()
            weights.refresh()
            if cfg.assert_simplex:
                _check_simplex(weights.alpha)
            if on_step is not None:
                on_step(weights.alpha.copy())
            for key in sums:
                sums[key] += terms[key]
            step += 1
        row = {key: sums[key] / n_batches for key in sums}
        row["epoch"] = epoch + 1
        row["alpha"] = [float(a) for a in weights.alpha]
        row["target_accuracy"] = (
            accuracy(adapted, weights.alpha, eval_set) if eval_set is not None else None
        )
        result.metrics.append(row)
    return result


def weights_only_adapt(models, target, cfg, eval_set=None, on_step=None):
    """Same loop with the feature extractors excluded from the optimizer."""
    return adapt(models, target, cfg, eval_set, on_step, optimize_features=False)


# -- softmax-average ensemble of independently adapted models ---------------------

def soft_ensemble_predict(models, x):
    """argmax of the mean per-model softmax output (average after softmax)."""
    check_compatible(models)
    probs = kernels.softmax_rows(models[0].logits(x))
    for m in models[1:]:
        probs = probs + kernels.softmax_rows(m.logits(x))
    return np.argmax(probs, axis=1)  # first max wins ties


def soft_ensemble_accuracy(models, labeled):
    return float(np.mean(soft_ensemble_predict(models, labeled.x) == labeled.y))


def prediction_label_entropy(models, alpha, x):
    """Entropy (nats) of the hard-prediction class histogram; collapse detector."""
    preds = predict(aggregate_logits(models, alpha, x))
    counts = np.bincount(preds, minlength=models[0].num_classes)
    p = counts / counts.sum()
    nz = p > 0
    return float(-(p[nz] * np.log(p[nz])).sum())
