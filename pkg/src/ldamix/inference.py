"""Posterior sampling for LDA topics and weights, and the contraction experiments."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
import logging
import math

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.optimize import linear_sum_assignment
from scipy.special import gammaln

from .metrics import wasserstein
from .models import (
    Corpus,
    CorpusLikelihood,
    LdaParams,
    MixingMeasure,
    sample_corpus,
    sample_fixed_allocation_doc,
    word_counts,
)
from .streams import make_rng, stream_id

log = logging.getLogger(__name__)

TARGET_ACCEPT = 0.3
MAX_SAMPLES = 500


@dataclass
class PriorSpec:
    """Dirichlet priors on the weights and on each topic, truncated at ``topic_floor``."""

    weight_prior: np.ndarray | None = None
    topic_prior: np.ndarray | None = None
    topic_floor: float = 1e-4

    def weight_hyper(self, K):
        g = np.ones(K) if self.weight_prior is None else np.asarray(self.weight_prior, dtype=float)
        if g.shape != (K,) or np.any(g <= 0):
            raise ValueError("weight prior must be a positive vector of length K")
        return g

    def topic_hyper(self, V):
        g = np.ones(V) if self.topic_prior is None else np.asarray(self.topic_prior, dtype=float)
        if g.shape != (V,) or np.any(g <= 0):
            raise ValueError("topic prior must be a positive vector of length V")
        return g

    def is_regular(self, K, V):
        return bool(np.all(self.weight_hyper(K) <= 1) and np.all(self.topic_hyper(V) <= 1))


def softmax0(z):
    """Inverse additive log-ratio map: append a zero coordinate and normalise."""
    z = np.concatenate([z, np.zeros(z.shape[:-1] + (1,))], axis=-1)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def alr(p):
    p = np.asarray(p, dtype=float)
    return np.log(p[..., :-1]) - np.log(p[..., -1:])


class Posterior:
    """Log posterior of ``(weights, topics)`` in additive log-ratio coordinates.

    Prior terms include the Jacobian ``prod p`` of the log-ratio map, so a
    Dirichlet(g) prior contributes ``sum g log p``. ``extra_counts`` adds one
    document whose topic proportions ``qt`` are kept in the state.
    """

    def __init__(self, counts, K, abar, prior=None, extra_counts=None):
        self.counts = np.asarray(counts, dtype=float)
        self.K = K
        self.V = self.counts.shape[1]
        self.abar = float(abar)
        self.prior = prior or PriorSpec()
        self.gw = self.prior.weight_hyper(K)
        self.gt = self.prior.topic_hyper(self.V)
        self.floor = self.prior.topic_floor
        self.lik = CorpusLikelihood(self.counts)
        self.extra_counts = None if extra_counts is None else np.asarray(extra_counts, dtype=float)

    def log_prior(self, w, theta):
        if np.any(theta < self.floor):
            return -np.inf
        return float(self.gw @ np.log(w) + (np.log(theta) @ self.gt).sum())

    def loglik(self, w, theta):
        return self.lik(self.abar * w, theta)

    def log_extra(self, qt, w, theta):
        if self.extra_counts is None:
            return 0.0
        alpha = self.abar * w
        log_dir = float(alpha @ np.log(qt) - gammaln(alpha).sum() + gammaln(alpha.sum()))
        with np.errstate(divide="ignore"):
            words = float(self.extra_counts @ np.log(qt @ theta))
        return log_dir + words


@dataclass
class Chain:
    samples: list
    log_post: list
    acceptance: dict
    seed: int | None = None
    config: dict = field(default_factory=dict)
    alloc: np.ndarray | None = None

    def __len__(self):
        return len(self.samples)


def initial_measure(counts, K, prior, rng):
    """Starting point from k-means on per-document word frequencies."""
    counts = np.asarray(counts, dtype=float)
    V = counts.shape[1]
    freq = counts / np.maximum(counts.sum(axis=1, keepdims=True), 1)
    floor = max(10 * prior.topic_floor, 1e-3)
    if K == 1:
        theta = freq.mean(axis=0, keepdims=True)
        w = np.ones(1)
    else:
        centers, labels = kmeans2(freq, K, minit="++", seed=rng)
        theta = centers
        w = np.bincount(labels, minlength=K) / labels.size
        empty = w == 0
        theta[empty] = rng.dirichlet(np.ones(V), size=int(empty.sum()))
        w = np.maximum(w, 0.5 / K)
    theta = np.maximum(theta, floor)
    theta /= theta.sum(axis=1, keepdims=True)
    return MixingMeasure(w / w.sum(), theta)


class _Block:
    """Random-walk proposal for one block with scale and covariance adapted in burn-in."""

    def __init__(self, name, dim, step=0.1):
        self.name = name
        self.dim = dim
        self.log_scale = math.log(step)
        self.chol = np.eye(dim)
        self.history = []
        self.window = []

    def propose(self, z, rng):
        return z + math.exp(self.log_scale) * (self.chol @ rng.standard_normal(self.dim))

    def adapt(self, accepted, t):
        gain = min(0.5, 10.0 / (t + 1) ** 0.6)
        self.log_scale += gain * (float(accepted) - TARGET_ACCEPT)
        self.window.append(self.log_scale)

    def freeze(self):
        # Average the adapted scale since the last refit to damp stochastic-approximation noise.
        if self.window:
            self.log_scale = float(np.mean(self.window[len(self.window) // 2 :]))

    def refit(self):
        h = np.asarray(self.history[len(self.history) // 2 :])
        if h.shape[0] < 4 * self.dim + 10:
            return
        cov = np.atleast_2d(np.cov(h, rowvar=False))
        cov += 1e-10 * np.eye(self.dim) * max(np.trace(cov) / self.dim, 1e-12)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            return
        self.chol = chol
        self.log_scale = math.log(2.38 / math.sqrt(self.dim))
        self.window = []


def run_mcmc(corpus, K, abar, prior=None, steps=2000, burn_in=None, thin=None, rng=None,
             init=None, extra_doc=None, max_samples=MAX_SAMPLES):
    """Blocked random-walk Metropolis for the LDA posterior with known ``abar``.

    One sweep updates the weights, then each topic row, then (if
    ``extra_doc`` is given) that document's topic proportions. Proposals are
    Gaussian in additive log-ratio coordinates. Scales and covariances adapt
    during burn-in (default a quarter of ``steps``) and are frozen after it.
    Topics below the prior floor are rejected.
    """
    rng = np.random.default_rng() if rng is None else rng
    prior = prior or PriorSpec()
    counts = corpus.counts() if isinstance(corpus, Corpus) else np.asarray(corpus, dtype=float)
    V = counts.shape[1]
    burn_in = steps // 4 if burn_in is None else int(burn_in)
    if steps <= burn_in:
        raise ValueError("steps must exceed burn_in")
    kept = steps - burn_in
    thin = max(1, math.ceil(kept / max_samples)) if thin is None else int(thin)

    extra_counts = None if extra_doc is None else word_counts(np.asarray(extra_doc).ravel(), V)[0]
    post = Posterior(counts, K, abar, prior, extra_counts)
    G = init if init is not None else initial_measure(counts, K, prior, rng)
    if G.K != K or G.V != V:
        raise ValueError("initial measure has the wrong shape")
    if np.any(G.atoms <= 0) or np.any(G.weights <= 0):
        raise ValueError("invalid initialization: starting point on the simplex boundary")
    zw = alr(G.weights)
    zt = alr(G.atoms)
    w, theta = softmax0(zw), softmax0(zt)
    qt = None
    zq = None
    if extra_counts is not None:
        qt = np.full(K, 1.0 / K)
        zq = alr(qt)

    lp = post.log_prior(w, theta)
    ll = post.loglik(w, theta)
    ex = post.log_extra(qt, w, theta) if qt is not None else 0.0
    if not np.isfinite(lp + ll + ex):
        raise ValueError("invalid initialization: zero posterior density at the starting point")

    blocks = []
    if K > 1:
        blocks.append(_Block("weights", K - 1))
    blocks += [_Block(f"topic{k}", V - 1) for k in range(K)]
    if qt is not None and K > 1:
        blocks.append(_Block("allocation", K - 1))
    post_tries = {b.name: 0 for b in blocks}
    post_acc = {b.name: 0 for b in blocks}
    refits = {int(burn_in * f) for f in (0.25, 0.5, 0.75)}

    samples, log_posts, allocs = [], [], []
    for t in range(steps):
        for b in blocks:
            if b.name == "weights":
                zw_new = b.propose(zw, rng)
                w_new = softmax0(zw_new)
                lp_new = post.log_prior(w_new, theta)
                ll_new = post.loglik(w_new, theta) if np.isfinite(lp_new) else -np.inf
                ex_new = post.log_extra(qt, w_new, theta) if qt is not None else 0.0
                state = zw_new
            elif b.name == "allocation":
                zq_new = b.propose(zq, rng)
                q_new = softmax0(zq_new)
                lp_new, ll_new = lp, ll
                ex_new = post.log_extra(q_new, w, theta)
                state = zq_new
            else:
                k = int(b.name[5:])
                zk = b.propose(zt[k], rng)
                th_new = theta.copy()
                th_new[k] = softmax0(zk)
                lp_new = post.log_prior(w, th_new)
                ll_new = post.loglik(w, th_new) if np.isfinite(lp_new) else -np.inf
                ex_new = post.log_extra(qt, w, th_new) if qt is not None else 0.0
                state = zk
            delta = (lp_new + ll_new + ex_new) - (lp + ll + ex)
            accepted = bool(np.isfinite(delta) and math.log(rng.uniform()) < delta)
            if accepted:
                lp, ll, ex = lp_new, ll_new, ex_new
                if b.name == "weights":
                    zw, w = state, w_new
                elif b.name == "allocation":
                    zq, qt = state, q_new
                else:
                    zt[k] = state
                    theta = th_new
            if t < burn_in:
                b.adapt(accepted, t)
                cur = zw if b.name == "weights" else zq if b.name == "allocation" else zt[int(b.name[5:])]
                b.history.append(cur.copy())
            else:
                post_tries[b.name] += 1
                post_acc[b.name] += int(accepted)
        if t + 1 in refits:
            for b in blocks:
                b.refit()
        if t + 1 == burn_in:
            for b in blocks:
                b.freeze()
        if t >= burn_in and (t - burn_in) % thin == thin - 1:
            samples.append(MixingMeasure(w.copy(), theta.copy()))
            log_posts.append(lp + ll + ex)
            if qt is not None:
                allocs.append(qt.copy())
    acceptance = {n: post_acc[n] / max(1, post_tries[n]) for n in post_acc}
    return Chain(samples, log_posts, acceptance,
                 config={"K": K, "abar": abar, "steps": steps, "burn_in": burn_in, "thin": thin},
                 alloc=np.array(allocs) if allocs else None)


def posterior_w_summary(chain, G0, r=1):
    """Mean and (25%, 75%) quantiles of ``W_r(G, G0)`` over the retained samples."""
    if not len(chain):
        raise ValueError("empty chain")
    vals = np.array([wasserstein(G, G0, r)[0] for G in chain.samples])
    q25, q75 = np.quantile(vals, [0.25, 0.75])
    return float(vals.mean()), (float(q25), float(q75))


def fit_loglog_slope(x, y):
    """Least-squares slope of ``log y`` on ``log x``: ``(slope, se, intercept)``."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    if np.unique(lx).size < 3:
        raise ValueError("need at least three distinct grid points")
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    dof = lx.size - 2
    s2 = float(resid @ resid) / dof if dof > 0 else float("nan")
    se = math.sqrt(s2 / float(((lx - lx.mean()) ** 2).sum()))
    return float(coef[0]), se, float(coef[1])


def _map_tasks(fn, tasks, jobs):
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, tasks))
    return [fn(t) for t in tasks]


def true_measure(V, K0, seed, dependent_topic=False, floor=1e-3):
    """Random topics (uniform on the simplex, floored) with uniform weights.

    With ``dependent_topic`` one more topic equal to the mean of the others
    is appended.
    """
    rng = make_rng(seed, "truth", V, K0)
    theta = np.maximum(rng.dirichlet(np.ones(V), size=K0), floor)
    theta /= theta.sum(axis=1, keepdims=True)
    if dependent_topic:
        theta = np.vstack([theta, theta.mean(axis=0)])
    K = theta.shape[0]
    return MixingMeasure(np.full(K, 1.0 / K), theta)


@dataclass
class ContractionConfig:
    experiment_id: str = "exact"
    V: int = 10
    K0: int = 3
    dependent_topic: bool = False
    N: int = 20
    abar: float = 0.5
    m_grid: tuple = (100, 316, 1000, 3162)
    K_fit: int = 3
    r: int = 1
    replications: int = 8
    steps: int = 1200
    seed: int = 20240501
    topic_floor: float = 1e-4

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "m_grid" in d:
            d["m_grid"] = tuple(int(m) for m in d["m_grid"])
        return cls(**d)


@dataclass
class ContractionResult:
    config: ContractionConfig
    rows: list
    slope: float | None = None
    slope_se: float | None = None
    intercept: float | None = None
    failures: int = 0

    def by_m(self):
        """Per grid point: mean over replications and the 25/75% band."""
        out = []
        for m in self.config.m_grid:
            vals = np.array([r["mean_w"] for r in self.rows if r["m"] == m and np.isfinite(r["mean_w"])])
            if vals.size:
                q25, q75 = np.quantile(vals, [0.25, 0.75])
                out.append({"m": m, "mean_w": float(vals.mean()), "q25": float(q25), "q75": float(q75), "n": int(vals.size)})
        return out


def _contraction_task(args):
    cfg, G0, m, rep = args
    seed = stream_id(cfg.seed, cfg.experiment_id, m, rep)
    row = {"experiment_id": cfg.experiment_id, "m": m, "replication": rep, "r": cfg.r, "seed": seed}
    try:
        corpus = sample_corpus(LdaParams(G0, cfg.abar), cfg.N, m, make_rng(cfg.seed, cfg.experiment_id, m, rep, "corpus"))
        chain = run_mcmc(corpus, cfg.K_fit, cfg.abar, PriorSpec(topic_floor=cfg.topic_floor), steps=cfg.steps,
                         rng=make_rng(cfg.seed, cfg.experiment_id, m, rep, "mcmc"))
        mean_w, (q25, q75) = posterior_w_summary(chain, G0, cfg.r)
        row.update(mean_w=mean_w, q25=q25, q75=q75, n_samples=len(chain))
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as err:
        log.warning("replication m=%d rep=%d failed: %s", m, rep, err)
        row.update(mean_w=float("nan"), q25=float("nan"), q75=float("nan"), n_samples=0)
    return row


def contraction_experiment(cfg, jobs=1, G0=None):
    """Posterior mean ``W_r`` to the truth across corpus sizes, with a log-log slope."""
    G0 = G0 or true_measure(cfg.V, cfg.K0, cfg.seed, cfg.dependent_topic)
    tasks = [(cfg, G0, m, rep) for m in cfg.m_grid for rep in range(cfg.replications)]
    rows = _map_tasks(_contraction_task, tasks, jobs)
    res = ContractionResult(cfg, rows, failures=sum(not np.isfinite(r["mean_w"]) for r in rows))
    good = [r for r in rows if np.isfinite(r["mean_w"]) and r["mean_w"] > 0]
    if len({r["m"] for r in good}) >= 3:
        res.slope, res.slope_se, res.intercept = fit_loglog_slope([r["m"] for r in good], [r["mean_w"] for r in good])
    return res


@dataclass
class AllocationConfig:
    experiment_id: str = "allocation"
    V: int = 10
    K0: int = 3
    N: int = 20
    abar: float = 0.5
    grid: tuple = ((250, 500), (500, 1000), (1000, 2000))
    q0: tuple = (0.6, 0.3, 0.1)
    replications: int = 8
    steps: int = 3000
    seed: int = 20240502
    topic_floor: float = 1e-4

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "grid" in d:
            d["grid"] = tuple((int(a), int(b)) for a, b in d["grid"])
        if "q0" in d:
            d["q0"] = tuple(float(x) for x in d["q0"])
        return cls(**d)


def align_labels(G, G0):
    """Permutation ``perm`` with ``G`` atom ``perm[k]`` matched to ``G0`` atom ``k`` by the W_1 plan."""
    plan = wasserstein(G, G0, 1)[1].matrix
    rows, cols = linear_sum_assignment(-plan)
    perm = np.empty(G0.K, dtype=int)
    perm[cols] = rows
    return perm


def _allocation_task(args):
    cfg, G0, m, n_extra, rep = args
    seed = stream_id(cfg.seed, cfg.experiment_id, m, n_extra, rep)
    row = {"experiment_id": cfg.experiment_id, "m": m, "n_extra": n_extra, "replication": rep, "seed": seed}
    try:
        rng = make_rng(cfg.seed, cfg.experiment_id, m, n_extra, rep, "data")
        corpus = sample_corpus(LdaParams(G0, cfg.abar), cfg.N, m, rng)
        doc = sample_fixed_allocation_doc(G0.atoms, cfg.q0, n_extra, rng)
        chain = run_mcmc(corpus, G0.K, cfg.abar, PriorSpec(topic_floor=cfg.topic_floor), steps=cfg.steps,
                         rng=make_rng(cfg.seed, cfg.experiment_id, m, n_extra, rep, "mcmc"), extra_doc=doc)
        mean_G = MixingMeasure(np.mean([s.weights for s in chain.samples], axis=0),
                               np.mean([s.atoms for s in chain.samples], axis=0))
        perm = align_labels(mean_G, G0)
        errs = np.linalg.norm(chain.alloc[:, perm] - np.asarray(cfg.q0), axis=1)
        row.update(error=float(errs.mean()), n_samples=len(chain))
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as err:
        log.warning("allocation m=%d n=%d rep=%d failed: %s", m, n_extra, rep, err)
        row.update(error=float("nan"), n_samples=0)
    return row


def allocation_experiment(cfg, jobs=1, G0=None):
    """Posterior error of one document's topic proportions along a grid of (m, length)."""
    G0 = G0 or true_measure(cfg.V, cfg.K0, cfg.seed)
    if len(cfg.q0) != G0.K:
        raise ValueError("q0 must have one entry per topic")
    tasks = [(cfg, G0, m, n, rep) for m, n in cfg.grid for rep in range(cfg.replications)]
    return _map_tasks(_allocation_task, tasks, jobs)


def summarize_allocation(rows, grid):
    out = []
    for m, n in grid:
        vals = np.array([r["error"] for r in rows if r["m"] == m and r["n_extra"] == n and np.isfinite(r["error"])])
        out.append({"m": m, "n_extra": n, "mean_error": float(vals.mean()) if vals.size else float("nan"), "n": int(vals.size)})
    return out


def config_dict(cfg):
    d = asdict(cfg)
    for k, v in d.items():
        if isinstance(v, tuple):
            d[k] = [list(x) if isinstance(x, tuple) else x for x in v]
    return d
