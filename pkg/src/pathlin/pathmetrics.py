"""Path-length analytics over a network's computation graph.

A random input-to-output path picks, at each nonlinear stage, one channel
class (nonlinear with the stage's nonlinear fraction p, linear otherwise),
and at each residual span either the skip or the branch with probability
1/2 each.  The number of nonlinear units met along the path is the path
length; its expectation is the width-agnostic normalized average path
length (NAPL).  Channels are weighted uniformly within a stage and a
channel counts as linear only when its slope is exactly 1 (frozen); the
continuous view is covered by ``average_slope``.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Stage:
    """A nonlinear layer with nonlinear channel fraction p in [0, 1]."""

    p: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise ValueError(f"nonlinear fraction must lie in [0, 1], got {self.p}")


@dataclass(frozen=True)
class Span:
    """A residual span: skip with probability 1/2, else traverse inner stages."""

    inner: tuple


@dataclass(frozen=True)
class PathProfile:
    stages: tuple

    def max_length(self):
        return _max_length(self.stages)


@dataclass(frozen=True)
class PathLengthDistribution:
    """Probability mass over nonlinear path lengths 0..L_max."""

    mass: tuple

    def __post_init__(self):
        m = np.asarray(self.mass)
        if m.size and (m.min() < 0.0 or abs(m.sum() - 1.0) > 1e-12):
            raise ValueError("path-length masses must be non-negative and sum to 1")

    def mean(self):
        m = np.asarray(self.mass)
        return float(np.arange(m.size) @ m)

    def support_points(self):
        return int(np.count_nonzero(np.asarray(self.mass)))

    def to_json(self):
        return {
            "lengths": list(range(len(self.mass))),
            "mass": [float(v) for v in self.mass],
        }


def _max_length(stages):
    total = 0
    for st in stages:
        total += _max_length(st.inner) if isinstance(st, Span) else 1
    return total


def profile_of(net):
    """Derive the path profile of a network from its slopes and frozen flags.

    ReLU layers are fully nonlinear (p = 1); a PReLU channel is nonlinear
    iff its slope differs from 1; identity layers contribute no stage.
    Residual spans of the spec become Span nodes around their inner stages.
    """
    def stage_for(i):
        layer = net.spec.layers[i]
        if layer.activation == "identity":
            return None
        if layer.activation == "relu":
            return Stage(1.0)
        slopes = net.slopes[i]
        return Stage(float(np.count_nonzero(slopes != 1.0) / slopes.size))

    span_end = {s: e for s, e in net.spec.spans}
    stages = []
    i = 0
    while i < len(net.spec.layers):
        if i in span_end:
            end = span_end[i]
            inner = tuple(
                st for j in range(i, end + 1) if (st := stage_for(j)) is not None
            )
            stages.append(Span(inner))
            i = end + 1
        else:
            st = stage_for(i)
            if st is not None:
                stages.append(st)
            i += 1
    return PathProfile(tuple(stages))


def napl(profile):
    """Expected nonlinear count of a random path through the profile."""
    def expect(stages):
        total = 0.0
        for st in stages:
            total += 0.5 * expect(st.inner) if isinstance(st, Span) else st.p
        return total

    return expect(profile.stages)


def path_length_distribution(profile):
    """Exact path-length mass function by convolving stage contributions.

    A plain stage contributes Bernoulli(p); a span contributes a point mass
    at 0 with weight 1/2 plus half of its inner sum's distribution.  The
    mass vector always covers 0..L_max, keeping structural zeros (e.g. the
    odd lengths of block-length-2 residual towers).
    """
    def pmf(stages):
        out = np.array([1.0])
        for st in stages:
            if isinstance(st, Span):
                inner = pmf(st.inner)
                contrib = 0.5 * inner
                contrib[0] += 0.5
            else:
                contrib = np.array([1.0 - st.p, st.p])
            out = np.convolve(out, contrib)
        return out

    return PathLengthDistribution(tuple(pmf(profile.stages)))


def choice_count(profile):
    """Number of binary choices a path makes (stages plus spans)."""
    def count(stages):
        total = 0
        for st in stages:
            total += 1 + count(st.inner) if isinstance(st, Span) else 1
        return total

    return count(profile.stages)


def enumerate_paths_oracle(profile, max_choices=20):
    """Reference distribution by explicit enumeration of every path choice.

    Walks all 2^k combinations of (channel-class, skip) decisions with
    their probability weights; a stage counts toward the length only when
    it is chosen nonlinear and every enclosing span is traversed.  Rejects
    profiles with more than ``max_choices`` binary choices.
    """
    slots = []

    def collect(stages, enclosing):
        for st in stages:
            if isinstance(st, Span):
                idx = len(slots)
                slots.append(("span", 0.5, enclosing))
                collect(st.inner, enclosing + (idx,))
            else:
                slots.append(("stage", st.p, enclosing))

    collect(profile.stages, ())
    k = len(slots)
    if k > max_choices:
        raise ValueError(
            f"choice space too large: 2^{k} combinations exceeds 2^{max_choices}"
        )
    mass = np.zeros(profile.max_length() + 1)
    for bits in range(1 << k):
        prob = 1.0
        length = 0
        for idx, (kind, p_on, enclosing) in enumerate(slots):
            on = (bits >> idx) & 1
            prob *= p_on if on else 1.0 - p_on
            if (
                kind == "stage"
                and on
                and all((bits >> j) & 1 for j in enclosing)
            ):
                length += 1
        mass[length] += prob
    return PathLengthDistribution(tuple(mass))


def average_slope(net):
    """Arithmetic mean of every PReLU slope parameter (frozen included)."""
    slopes = [s for s in net.slopes if s is not None]
    if not slopes:
        raise ValueError("network has no PReLU units")
    return float(np.mean(np.concatenate(slopes)))


def proportion_disabled(net):
    """Fraction of PReLU units whose slope is exactly 1."""
    slopes = [s for s in net.slopes if s is not None]
    if not slopes:
        raise ValueError("network has no PReLU units")
    cat = np.concatenate(slopes)
    return float(np.count_nonzero(cat == 1.0) / cat.size)
