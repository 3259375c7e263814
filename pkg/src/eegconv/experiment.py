"""Cohort assembly, subject-level splits, evaluation and multi-seed statistics."""
import json
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .models import INPUT_KINDS
from .preprocessing import Montage, PreprocessConfig, default_montage, preprocess, stack_samples
from .spectral import TopomapRenderer, featurize_epochs, to_network_input
from .training import TrainConfig, train

KINDS = ("raw", "chromatic", "side_by_side")
VOTE_N = 40
Z95 = 1.96

DISPLAY_NAMES = {"r_scnn": "R-SCNN", "s_scnn": "S-SCNN", "s_vgg": "S-VGG", "r_vgg": "R-VGG"}


@dataclass
class Cohort:
    """Samples in temporal order per subject, plus one label per sample.

    ``X`` holds network-ready float32 arrays ``(n, C, H, W)``.
    """

    X: np.ndarray
    y: np.ndarray
    subjects: np.ndarray
    kind: str = "raw"
    provenance: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.int64)
        self.subjects = np.asarray(self.subjects).astype(str)
        if not len(self.X) == len(self.y) == len(self.subjects):
            raise ValueError("X, y and subjects must have equal length")
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        for sid in np.unique(self.subjects):
            if len(np.unique(self.y[self.subjects == sid])) > 1:
                raise ValueError(f"subject {sid} has mixed labels")

    def __len__(self):
        return len(self.y)

    def subject_table(self) -> List[Tuple[str, int]]:
        """``(subject_id, sex)`` in order of first appearance."""
        _, first = np.unique(self.subjects, return_index=True)
        return [(self.subjects[i], int(self.y[i])) for i in sorted(first)]

    def select(self, subject_ids) -> "Cohort":
        keep = np.isin(self.subjects, list(subject_ids))
        return Cohort(self.X[keep], self.y[keep], self.subjects[keep], self.kind,
                      dict(self.provenance))


def build_cohort(recordings, kind="raw", montage: Optional[Montage] = None,
                 cfg: PreprocessConfig = PreprocessConfig()) -> Cohort:
    """Preprocess recordings and, for spectral kinds, render topomap images."""
    montage = montage or default_montage()
    samples = [s for rec in recordings for s in preprocess(rec, montage, cfg)]
    X, y, subjects = stack_samples(samples)
    return cohort_from_epochs(X, y, subjects, kind, montage)


def cohort_from_epochs(X, y, subjects, kind="raw", montage: Optional[Montage] = None,
                       fs=128.0) -> Cohort:
    if kind == "raw":
        data = np.asarray(X, dtype=np.float32)[:, None]
    elif kind in ("chromatic", "side_by_side"):
        renderer = TopomapRenderer(montage or default_montage())
        data = to_network_input(featurize_epochs(X, renderer, kind, fs), kind)
    else:
        raise ValueError(f"unknown kind {kind!r}; expected one of {KINDS}")
    return Cohort(data, y, subjects, kind)


def balance_by_sex(subjects: Sequence[Tuple[str, int]]) -> List[Tuple[str, int]]:
    """Keep the minority sex whole and the first majority subjects by id."""
    subjects = [(str(s), int(x)) for s, x in subjects]
    groups = {0: sorted(s for s in subjects if s[1] == 0),
              1: sorted(s for s in subjects if s[1] == 1)}
    if not groups[0] or not groups[1]:
        raise ValueError("both sexes must be present")
    n = min(len(groups[0]), len(groups[1]))
    keep = set(groups[0][:n]) | set(groups[1][:n])
    return [s for s in subjects if s in keep]


def split_counts(n, ratios=(60, 30, 10)):
    """Subject counts per split: rounded train and validation, remainder to test."""
    if len(ratios) != 3 or min(ratios) <= 0 or not np.isclose(sum(ratios), 100):
        raise ValueError("ratios must be three positive numbers summing to 100")
    if n < 3:
        raise ValueError("need at least one subject per split")
    n_train = int(np.floor(n * ratios[0] / 100 + 0.5))
    n_val = int(np.floor(n * ratios[1] / 100 + 0.5))
    counts = [n_train, n_val, n - n_train - n_val]
    # keep every split non-empty on tiny cohorts
    for k in range(3):
        while counts[k] < 1:
            donor = int(np.argmax(counts))
            counts[donor] -= 1
            counts[k] += 1
    return counts


def _apportion(total, weights):
    """Largest-remainder integer split of ``total`` proportional to ``weights``."""
    ideal = total * np.asarray(weights, dtype=float) / np.sum(weights)
    out = np.floor(ideal).astype(int)
    order = np.argsort(-(ideal - out), kind="stable")
    out[order[:total - out.sum()]] += 1
    return out


def split_subjects(subjects: Sequence[Tuple[str, int]], ratios=(60, 30, 10), seed=0):
    """Stratified, seeded, subject-disjoint train/val/test split.

    Returns three lists of ``(subject_id, sex)``; the female count of each
    split is within one subject of its proportional share.
    """
    subjects = sorted((str(s), int(x)) for s, x in subjects)
    if len({s for s, _ in subjects}) != len(subjects):
        raise ValueError("subject ids must be unique")
    counts = split_counts(len(subjects), ratios)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5B117]))
    females = [subjects[i] for i in rng.permutation(len(subjects)) if subjects[i][1] == 1]
    males = [s for s in (subjects[i] for i in rng.permutation(len(subjects))) if s[1] == 0]
    n_f = _apportion(len(females), counts)
    n_m = np.asarray(counts) - n_f
    out, fi, mi = [], 0, 0
    for k in range(3):
        part = females[fi:fi + n_f[k]] + males[mi:mi + n_m[k]]
        fi += n_f[k]
        mi += n_m[k]
        out.append(sorted(part))
    return tuple(out)


def per_sample_accuracy(p_female, labels):
    p_female = np.asarray(p_female, dtype=float)
    if p_female.size == 0:
        raise ValueError("empty sample set")
    return float(np.mean((p_female >= 0.5).astype(np.int64) == np.asarray(labels)))


def subject_votes(p_female, subjects, vote_n=VOTE_N):
    """Mean female probability over each subject's first ``vote_n`` samples.

    Returns ``(subject ids in first-appearance order, mean probabilities)``.
    """
    p_female = np.asarray(p_female, dtype=float)
    subjects = np.asarray(subjects).astype(str)
    if p_female.size == 0:
        raise ValueError("empty cohort")
    ids, first, inverse = np.unique(subjects, return_index=True, return_inverse=True)
    # rank of each sample within its subject, in original order
    order = np.argsort(inverse, kind="stable")
    starts = np.searchsorted(inverse[order], np.arange(len(ids)))
    rank = np.empty(len(subjects), dtype=np.int64)
    rank[order] = np.arange(len(subjects)) - starts[inverse[order]]
    used = rank < vote_n
    sums = np.bincount(inverse[used], weights=p_female[used], minlength=len(ids))
    counts = np.bincount(inverse[used], minlength=len(ids))
    appear = np.argsort(first, kind="stable")
    return ids[appear], (sums / counts)[appear]


def per_subject_accuracy(p_female, labels, subjects, vote_n=VOTE_N, strict=False):
    """Accuracy of the per-subject mean-probability vote.

    Ties (mean exactly 0.5) count as female unless ``strict``.
    """
    ids, p_ave = subject_votes(p_female, subjects, vote_n)
    labels = np.asarray(labels)
    subjects = np.asarray(subjects).astype(str)
    truth = np.array([labels[np.flatnonzero(subjects == s)[0]] for s in ids])
    pred = (p_ave > 0.5) if strict else (p_ave >= 0.5)
    return float(np.mean(pred.astype(np.int64) == truth))


def _female_probability(model, X):
    return np.asarray(model.predict_proba(X))[:, 1]


def evaluate_per_sample(model, cohort: Cohort):
    """Per-sample accuracy of any model exposing ``predict_proba``."""
    if len(cohort) == 0:
        raise ValueError("empty sample set")
    return per_sample_accuracy(_female_probability(model, cohort.X), cohort.y)


def evaluate_per_subject(model, cohort: Cohort, vote_n=VOTE_N, strict=False):
    if len(cohort) == 0:
        raise ValueError("empty cohort")
    return per_subject_accuracy(_female_probability(model, cohort.X), cohort.y,
                                cohort.subjects, vote_n, strict)


def raw_input_scale(cohort: Cohort):
    """Gain that brings a raw cohort to unit standard deviation (one global constant)."""
    sd = float(np.std(cohort.X, dtype=np.float64))
    if not np.isfinite(sd) or sd <= 0:
        raise ValueError("cohort has no variance")
    return 1.0 / sd


def confidence_interval(values):
    """``(mean, lo, hi)`` with half-width ``1.96 * sd / sqrt(n)`` (sample sd)."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or len(v) < 2:
        raise ValueError("need at least two values")
    mean = float(v.mean())
    half = Z95 * float(v.std(ddof=1)) / np.sqrt(len(v))
    return mean, mean - half, mean + half


def format_ci(values, scale=100.0, digits=2):
    """Table-style ``mean (lo-hi)``, in percent by default."""
    m, lo, hi = (scale * x for x in confidence_interval(values))
    return f"{m:.{digits}f} ({lo:.{digits}f}-{hi:.{digits}f})"


@dataclass
class RunReport:
    model: str
    eval_epoch: int
    seeds: List[int]
    per_sample: List[float]
    per_subject: List[float]
    curves: Dict[int, List[Dict[str, float]]] = field(default_factory=dict)

    def summary(self):
        return {"per_sample": confidence_interval(self.per_sample),
                "per_subject": confidence_interval(self.per_subject)}

    def rows(self):
        """Table-shaped rows: (model, metric, formatted mean with CI)."""
        name = DISPLAY_NAMES.get(self.model, self.model)
        return [(name, "per-sample", format_ci(self.per_sample)),
                (name, "per-subject", format_ci(self.per_subject))]

    def to_dict(self):
        return {"model": self.model, "eval_epoch": self.eval_epoch, "seeds": list(self.seeds),
                "per_sample": list(self.per_sample), "per_subject": list(self.per_subject),
                "curves": {str(k): v for k, v in self.curves.items()}}

    @classmethod
    def from_dict(cls, d):
        return cls(d["model"], int(d["eval_epoch"]), [int(s) for s in d["seeds"]],
                   [float(x) for x in d["per_sample"]], [float(x) for x in d["per_subject"]],
                   {int(k): v for k, v in d.get("curves", {}).items()})

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def format_table(reports: Sequence[RunReport]):
    lines = [f"{'Model':<8s} {'Metric':<12s} Accuracy % (95% CI)"]
    for r in reports:
        for name, metric, cell in r.rows():
            lines.append(f"{name:<8s} {metric:<12s} {cell}")
    return "\n".join(lines)


def train_and_evaluate(cfg: TrainConfig, train_set: Cohort, val_set: Cohort, test_set: Cohort,
                       vote_n=VOTE_N):
    """One seed: train, restore the selected checkpoint, score the test set.

    Returns ``(per-sample accuracy, per-subject accuracy, curves, network)``.
    """
    if INPUT_KINDS[cfg.model] != train_set.kind:
        raise ValueError(f"{cfg.model} expects {INPUT_KINDS[cfg.model]} inputs, "
                         f"cohort holds {train_set.kind}")
    net = cfg.build_network()
    result = train(net, train_set.X, train_set.y, cfg, val_set.X, val_set.y)
    net.load_parameters(result.checkpoints[result.selected_epoch])
    p = net.predict_proba(test_set.X)[:, 1]
    return (per_sample_accuracy(p, test_set.y),
            per_subject_accuracy(p, test_set.y, test_set.subjects, vote_n),
            result.curves, net)


def multi_seed_run(cfg: TrainConfig, cohort: Cohort, seeds: Sequence[int],
                   ratios=(60, 30, 10), vote_n=VOTE_N) -> RunReport:
    """Train ``cfg.model`` once per seed on a fixed split and aggregate test accuracies."""
    seeds = [int(s) for s in seeds]
    if len(seeds) < 2:
        raise ValueError("need at least two seeds")
    tr, va, te = split_subjects(cohort.subject_table(), ratios, cfg.split_seed)
    sets = [cohort.select(s for s, _ in part) for part in (tr, va, te)]
    report = RunReport(cfg.model, cfg.resolved_eval_epoch(), seeds, [], [])
    for seed in seeds:
        acc_s, acc_p, curves, _ = train_and_evaluate(replace(cfg, seed=seed), *sets, vote_n=vote_n)
        report.per_sample.append(acc_s)
        report.per_subject.append(acc_p)
        report.curves[seed] = curves
    return report
