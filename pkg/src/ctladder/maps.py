"""Concrete level maps between fibers.

All maps are returned as integer arrays indexed by source vertex id.  Maps of
finite windows of infinite spaces must decide what to do at the edge of the
window; each constructor here records that policy and how often it fired.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ctladder.metric_graph import GraphInputError, MetricGraph
from ctladder.models import (Horoball, HoroballSystem, TruncatedSpace, complex_coords, disk_to_halfplane,
                             halfplane_to_disk, inverse_word, nearest_net_vertex,
                             reduce_word, word_index)

DEFAULT_SUBSTITUTION = {"a": "ab", "b": "a"}


def identity_map(g: MetricGraph) -> np.ndarray:
    return np.arange(g.n, dtype=np.int64)


def substitution_images(substitution: dict) -> dict:
    """Extend a substitution on generators to their inverses."""
    images = {}
    for x, w in substitution.items():
        if x != x.lower():
            raise GraphInputError("substitution keys must be lower-case generators")
        images[x] = reduce_word(w)
        images[x.upper()] = inverse_word(images[x])
    return images


def apply_substitution(word: str, images: dict) -> str:
    return reduce_word("".join(images[c] for c in word))


def free_group_map_on_ball(ball: MetricGraph, substitution: dict | None = None):
    """Free-group endomorphism restricted to a Cayley ball.

    Images longer than the ball radius are clamped to their prefix of length
    radius (the in-ball vertex nearest to the true image along its word).
    Returns ``(map array, clamp rate)``.
    """
    substitution = DEFAULT_SUBSTITUTION if substitution is None else substitution
    radius = ball.meta["radius"]
    images = substitution_images(substitution)
    index = word_index(ball)
    out = np.empty(ball.n, dtype=np.int64)
    clamped = 0
    for v, tag in enumerate(ball.tags):
        img = apply_substitution(tag["word"], images)
        if len(img) > radius:
            img = img[:radius]
            clamped += 1
        try:
            out[v] = index[img]
        except KeyError as exc:
            raise GraphInputError(f"image word {img!r} uses letters outside the ball") from exc
    return out, clamped / ball.n


def tree_automorphism(tree: MetricGraph, rng: np.random.Generator) -> np.ndarray:
    """Random root-fixing automorphism: an independent child permutation at every vertex."""
    addresses = [t["address"] for t in tree.tags]
    index = {a: i for i, a in enumerate(addresses)}
    valence = tree.meta["valence"]
    perms = {}
    out = np.empty(tree.n, dtype=np.int64)
    for v, addr in enumerate(addresses):
        new = []
        for k in range(len(addr)):
            prefix = addr[:k]
            if prefix not in perms:
                perms[prefix] = rng.permutation(valence if k == 0 else valence - 1)
            new.append(int(perms[prefix][addr[k]]))
        out[v] = index[tuple(new)]
    return out


@dataclass
class MobiusMap:
    """A Moebius transformation snapped to a truncated net.

    ``full`` maps full-graph ids to full-graph ids; ``trunc`` is its
    restriction to non-interior vertices, in truncated ids.  ``horoball_map``
    sends a horoball id to the id of its image horoball (-1 when the image
    was not selected in the window).
    """

    matrix: tuple
    full: np.ndarray
    trunc: np.ndarray
    horoball_map: np.ndarray
    unmatched: int
    outside_window: int


def _mobius(matrix, w):
    a, b, c, d = matrix
    return (a * w + b) / (c * w + d)


def _image_base(matrix, base):
    a, b, c, d = matrix
    p, q = base["p"], base["q"]
    p2, q2 = a * p + b * q, c * p + d * q
    if q2 < 0 or (q2 == 0 and p2 < 0):
        p2, q2 = -p2, -q2
    return (p2, q2)


def invariant_subsystem(ts: TruncatedSpace, matrix=(0, -1, 1, 0)) -> TruncatedSpace:
    """Keep only horoballs whose forward images under the matrix stay selected.

    Near the edge of the window a horoball's image may contain no net vertex;
    such horoballs (and those mapping onto them) are returned to the plain
    part of the net so that the map sends horoballs to horoballs.
    """
    labels = {(h.base["p"], h.base["q"]): h.id for h in ts.system.horoballs}
    keep = set(labels.values())
    while True:
        drop = {h for h in keep if labels.get(_image_base(matrix, ts.system[h].base)) not in keep}
        if not drop:
            break
        keep -= drop
    kept = [ts.system[h] for h in sorted(keep)]
    horoballs = [Horoball(i, h.base, h.interior, h.horosphere, h.depth) for i, h in enumerate(kept)]
    meta = dict(ts.meta, invariant_under=tuple(matrix),
                dropped_noninvariant=len(ts.system) - len(horoballs))
    return TruncatedSpace(ts.full, HoroballSystem(horoballs, ts.full.n), meta)


def mobius_map(ts: TruncatedSpace, matrix=(0, -1, 1, 0)) -> MobiusMap:
    """Integral Moebius map ``w -> (a w + b)/(c w + d)`` acting on the net of ``ts``.

    Each vertex goes to the nearest net vertex of its image, searched within
    the matching region: interior vertices of a horoball land in the interior
    of the image horoball, its horosphere vertices on the image horosphere,
    and all other vertices among non-interior vertices.  The default is
    ``w -> -1/w``, the rotation by pi about the window centre, which keeps the
    window and the shrunk Ford family invariant.
    """
    a, b, c, d = matrix
    if a * d - b * c != 1:
        raise GraphInputError("matrix must have determinant 1")
    sysm = ts.system
    z = complex_coords(ts.full)
    w = disk_to_halfplane(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        img = halfplane_to_disk(_mobius(matrix, w))
    # the window centre maps to the image of i; points near the ideal boundary stay finite
    img = np.where(np.isfinite(img), img, 1.0 - 1e-12)
    outside = int(np.sum(np.abs(img) > np.abs(z).max() + 1e-9))
    by_label = {(h.base["p"], h.base["q"]): h.id for h in sysm.horoballs}
    hmap = np.array([by_label.get(_image_base(matrix, h.base), -1) for h in sysm.horoballs],
                    dtype=np.int64)
    out = np.empty(ts.full.n, dtype=np.int64)
    non_interior = ts.to_full
    groups: dict = {}
    unmatched = 0
    for v in range(ts.full.n):
        h = sysm.owner[v]
        inside = bool(sysm.interior_mask[v])
        if h >= 0 and hmap[h] >= 0:
            key = (int(hmap[h]), inside)
        elif inside:
            unmatched += 1
            key = ("any",)
        else:
            if h >= 0:
                unmatched += 1
            key = ("outside",)
        groups.setdefault(key, []).append(v)
    for key, verts in groups.items():
        if key == ("any",):
            cand = None
        elif key == ("outside",):
            cand = non_interior
        else:
            hb = sysm[key[0]]
            cand = np.array(sorted(hb.interior if key[1] else hb.horosphere), dtype=np.int64)
        verts = np.asarray(verts)
        out[verts] = nearest_net_vertex(z, img[verts], cand)
    trunc = ts.to_trunc[out[ts.to_full]]
    if np.any(trunc < 0):
        raise GraphInputError("a non-interior vertex was mapped into a horoball interior")
    return MobiusMap(tuple(matrix), out, trunc, hmap, unmatched, outside)
