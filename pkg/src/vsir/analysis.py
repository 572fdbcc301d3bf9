"""Term-frequency/embedding-norm report and the Welch two-sample test.

Relates each term's collection frequency to the L2 norm of its learned
embedding, banding terms by frequency rank: the top 25% are "high", the
bottom 25% "low", and the middle 50% "mid".  The report ships as a CSV
plus a rendered scatter figure; the summary tests whether the mid band's
mean norm differs from the low and high bands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import stdtr

from .corpus import Vocabulary
from .errors import CorpusError, EvaluationError
from .params import ModelParams

BANDS = ("high", "mid", "low")


@dataclass(frozen=True)
class TermNormRow:
    term: str
    cf: int
    l2norm: float
    band: str


def welch_t(sample_a: Sequence[float], sample_b: Sequence[float]) -> tuple[float, float]:
    """Welch's t statistic and two-sided p value for unequal variances.

    Degrees of freedom follow Welch-Satterthwaite; the p value comes from
    the Student-t tail.

    Raises:
        EvaluationError: if either sample has fewer than 2 observations or
            both sample variances are zero.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise EvaluationError("welch_t requires at least 2 observations per sample")
    var_a = a.var(ddof=1)
    var_b = b.var(ddof=1)
    if var_a == 0.0 and var_b == 0.0:
        raise EvaluationError("welch_t requires nonzero variance in at least one sample")
    sa = var_a / a.size
    sb = var_b / b.size
    t = (a.mean() - b.mean()) / math.sqrt(sa + sb)
    dof = (sa + sb) ** 2 / (sa**2 / (a.size - 1) + sb**2 / (b.size - 1))
    p = 2.0 * float(stdtr(dof, -abs(t)))
    return float(t), p


def term_norm_report(params: ModelParams, vocab: Vocabulary) -> list[TermNormRow]:
    """Per-term (term, CF, embedding L2 norm, frequency band) rows.

    Reserved tokens are excluded.  Because non-reserved vocabulary ids are
    already ordered by descending corpus frequency, band boundaries fall
    at rank quantiles: the first quarter of ranks is "high", the last
    quarter "low", the middle half "mid".

    Raises:
        CorpusError: with fewer than 8 non-reserved terms the quartile
            bands degenerate.
    """
    word_emb = params.tensors["word_emb"]
    if word_emb.shape[0] != len(vocab):
        raise CorpusError("model and vocabulary sizes disagree")
    reserved = set(vocab.reserved_ids)
    ids = [i for i in range(len(vocab)) if i not in reserved]
    n_terms = len(ids)
    if n_terms < 8:
        raise CorpusError("term report needs at least 8 non-reserved terms")

    n_tail = n_terms // 4
    norms = np.linalg.norm(word_emb, axis=1)
    rows = []
    for rank, i in enumerate(ids):
        if rank < n_tail:
            band = "high"
        elif rank < n_terms - n_tail:
            band = "mid"
        else:
            band = "low"
        rows.append(TermNormRow(term=vocab.terms[i], cf=vocab.counts[i], l2norm=float(norms[i]), band=band))
    return rows


@dataclass(frozen=True)
class BandSummary:
    """Band means plus the Welch tests of the mid band against the tails."""

    band_means: dict[str, float]
    mid_vs_low: tuple[float, float]
    mid_vs_high: tuple[float, float]


def band_summary(rows: Sequence[TermNormRow]) -> BandSummary:
    by_band = {band: [r.l2norm for r in rows if r.band == band] for band in BANDS}
    means = {band: float(np.mean(values)) for band, values in by_band.items()}
    return BandSummary(
        band_means=means,
        mid_vs_low=welch_t(by_band["mid"], by_band["low"]),
        mid_vs_high=welch_t(by_band["mid"], by_band["high"]),
    )


def write_term_report(rows: Sequence[TermNormRow], summary: BandSummary, path) -> None:
    """Write `term,cf,l2norm,band` rows followed by a commented summary block."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("term,cf,l2norm,band\n")
        for r in rows:
            f.write(f"{r.term},{r.cf},{r.l2norm:.8f},{r.band}\n")
        for band in BANDS:
            f.write(f"# mean_l2norm_{band},{summary.band_means[band]:.8f}\n")
        for label, (t, p) in (
            ("mid_vs_low", summary.mid_vs_low),
            ("mid_vs_high", summary.mid_vs_high),
        ):
            f.write(f"# welch_{label},t={t:.6f},p={p:.6g}\n")


def render_term_report_figure(rows: Sequence[TermNormRow], summary: BandSummary, path) -> None:
    """Render the CF-vs-norm scatter with band means to an image file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    colors = {"high": "tab:red", "mid": "tab:green", "low": "tab:blue"}
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for band in BANDS:
        xs = [max(r.cf, 1) for r in rows if r.band == band]
        ys = [r.l2norm for r in rows if r.band == band]
        ax.scatter(xs, ys, s=9, alpha=0.55, color=colors[band], label=f"{band} frequency")
        ax.axhline(summary.band_means[band], color=colors[band], linestyle="--", linewidth=0.9)
    ax.set_xscale("log")
    ax.set_xlabel("collection frequency")
    ax.set_ylabel("embedding L2 norm")
    ax.set_title("Term frequency vs. embedding norm")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
