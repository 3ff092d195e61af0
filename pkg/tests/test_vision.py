from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image, ImageDraw

from manga_layout.geometry import Correspondence
from manga_layout.vision import (
    Keypoint,
    MeanShift1D,
    canny_edges,
    connected_components,
    detect_keypoints,
    match_descriptors,
    meanshift_1d,
    non_maximum_suppression,
    sobel_gradients,
)


def flood_fill_count(mask, connectivity):
    """Reference labeling by explicit BFS."""
    h, w = mask.shape
    seen = np.zeros_like(mask)
    steps = [(0, 1), (1, 0), (0, -1), (-1, 0)]
    if connectivity == 8:
        steps += [(1, 1), (1, -1), (-1, 1), (-1, -1)]
    count, sizes = 0, []
    for y in range(h):
        for x in range(w):
            if mask[y, x] and not seen[y, x]:
                count += 1
                stack, n = [(y, x)], 0
                seen[y, x] = True
                while stack:
                    cy, cx = stack.pop()
                    n += 1
                    for dy, dx in steps:
                        ny, nx = cy + dy, cx + dx
                        if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            stack.append((ny, nx))
                sizes.append(n)
    return count, sorted(sizes)


def disk_image(r, size=160):
    im = Image.new("L", (size, size), 255)
    c = size // 2
    ImageDraw.Draw(im).ellipse([c - r, c - r, c + r - 1, c + r - 1], fill=0)
    return np.asarray(im)


class TestCanny:
    def test_uniform_has_no_edges(self):
        assert not canny_edges(np.full((40, 40), 128, np.uint8)).any()

    def test_vertical_step(self):
        img = np.zeros((40, 60), np.uint8)
        img[:, 30:] = 255
        e = canny_edges(img)
        cols = np.flatnonzero(e[5:-5].any(axis=0))
        assert len(cols) == 1 and abs(cols[0] - 29.5) <= 1
        assert e[5:-5, cols[0]].all()

    @pytest.mark.parametrize("r", [20, 45])
    def test_circle_perimeter(self, r):
        n = canny_edges(disk_image(r)).sum()
        assert abs(n - 2 * np.pi * r) <= 0.15 * 2 * np.pi * r

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            canny_edges(np.zeros((8, 8), np.uint8), 100, 50)

    def test_subset_of_nms_maxima(self):
        img = disk_image(30)
        gx, gy = sobel_gradients(img)
        assert not (canny_edges(img) & ~(non_maximum_suppression(gx, gy) > 0)).any()

    @settings(max_examples=15, deadline=None)
    @given(st.integers(60, 250), st.integers(0, 2**31 - 1))
    def test_raising_high_never_adds_edges(self, high, seed):
        img = np.random.default_rng(seed).integers(0, 256, (24, 24)).astype(np.uint8)
        assert not (canny_edges(img, 50, high + 20) & ~canny_edges(img, 50, high)).any()

    def test_color_input_uses_luma(self):
        rgb = np.zeros((30, 30, 3), np.uint8)
        rgb[:, 15:] = (255, 255, 255)
        assert canny_edges(rgb).any()


class TestComponents:
    def test_empty(self):
        c = connected_components(np.zeros((5, 5), bool))
        assert c.count == 0 and not c.labels.any()

    def test_block(self):
        m = np.zeros((20, 20), bool)
        m[3:13, 4:14] = True
        c = connected_components(m)
        assert c.count == 1 and c.areas.tolist() == [100]

    def test_diagonal_touch(self):
        m = np.zeros((6, 6), bool)
        m[0:3, 0:3] = True
        m[3:6, 3:6] = True
        assert connected_components(m, 4).count == 2
        assert connected_components(m, 8).count == 1

    def test_bad_connectivity(self):
        with pytest.raises(ValueError):
            connected_components(np.zeros((3, 3), bool), 6)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from([4, 8]))
    def test_matches_flood_fill(self, seed, conn):
        m = np.random.default_rng(seed).random((9, 11)) < 0.45
        c = connected_components(m, conn)
        count, sizes = flood_fill_count(m, conn)
        assert c.count == count
        assert sorted(c.areas.tolist()) == sizes
        assert c.areas.sum() == m.sum()
        assert set(np.unique(c.labels[m])) == set(range(1, count + 1))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_transpose_invariant(self, seed):
        m = np.random.default_rng(seed).random((8, 13)) < 0.5
        a, b = connected_components(m), connected_components(m.T)
        assert sorted(a.areas.tolist()) == sorted(b.areas.tolist())


def partition(labels):
    groups = {}
    for i, l in enumerate(labels):
        groups.setdefault(l, set()).add(i)
    return sorted(map(frozenset, groups.values()), key=min)


class TestMeanShift:
    def test_identical(self):
        assert meanshift_1d([3, 3, 3], 1.0) == [0, 0, 0]

    def test_two_groups(self):
        assert partition(meanshift_1d([0, 1, 2, 100, 101, 102], 10)) == [{0, 1, 2}, {3, 4, 5}]

    def test_single(self):
        assert meanshift_1d([42.0], 5) == [0]

    def test_validation(self):
        with pytest.raises(ValueError):
            meanshift_1d([1, 2], 0)
        with pytest.raises(ValueError):
            meanshift_1d([], 1)

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(st.integers(-200, 200), min_size=1, max_size=12),
        st.integers(1, 30),
        st.randoms(use_true_random=False),
        st.integers(-1000, 1000),
    )
    def test_permutation_and_shift_invariance(self, pts, bw, rnd, shift):
        base = partition(meanshift_1d(pts, bw))
        perm = list(range(len(pts)))
        rnd.shuffle(perm)
        shuffled = meanshift_1d([pts[i] for i in perm], bw)
        back = [None] * len(pts)
        for k, i in enumerate(perm):
            back[i] = shuffled[k]
        assert partition(back) == base
        assert partition(meanshift_1d([p + shift for p in pts], bw)) == base

    def test_estimator(self):
        est = MeanShift1D(bandwidth=10).fit([[0], [1], [2], [100], [101]])
        assert est.labels_.tolist() == [0, 0, 0, 1, 1]
        assert est.cluster_centers_.tolist() == [1.0, 100.5]
        assert MeanShift1D(bandwidth=3).fit_predict([5, 5]).tolist() == [0, 0]


def l_shape(size=64, corner=(30, 25)):
    img = np.full((size, size), 255, np.uint8)
    cx, cy = corner
    img[cy:, cx:] = 0
    return img


def textured(seed=0, shape=(120, 160)):
    rng = np.random.default_rng(seed)
    im = Image.new("L", shape[::-1], 255)
    d = ImageDraw.Draw(im)
    for _ in range(40):
        x, y = rng.integers(0, shape[1]), rng.integers(0, shape[0])
        w, h = rng.integers(4, 20, 2)
        d.rectangle([x, y, x + w, y + h], fill=int(rng.integers(0, 200)))
    return np.asarray(im)


class TestKeypoints:
    def test_uniform(self):
        assert detect_keypoints(np.full((40, 40), 200, np.uint8)) == []

    def test_corner(self):
        kps = detect_keypoints(l_shape())
        assert any(abs(k.pos[0] - 30) <= 2 and abs(k.pos[1] - 25) <= 2 for k in kps)

    def test_descriptor_normalized(self):
        for k in detect_keypoints(textured()):
            assert k.descriptor.shape == (256,)
            assert np.linalg.norm(k.descriptor) == pytest.approx(1.0)

    def test_too_small(self):
        with pytest.raises(ValueError):
            detect_keypoints(np.zeros((10, 10), np.uint8))

    def test_max_kp(self):
        assert len(detect_keypoints(textured(), max_kp=5)) == 5

    def test_translation(self):
        big = textured(1, (160, 200))
        a, b = big[20:140, 20:180], big[17:137, 13:173]
        matches = match_descriptors(detect_keypoints(b), detect_keypoints(a), 0.8)
        offsets = Counter((round(m.src[0] - m.dst[0]), round(m.src[1] - m.dst[1])) for m in matches)
        assert offsets.most_common(1)[0][0] == (7, 3)

    def test_translation_equivariant_away_from_borders(self):
        big = textured(2, (160, 200))
        a, b = big[20:140, 20:180], big[17:137, 13:173]
        pa = {k.pos for k in detect_keypoints(a)}
        pb = {(k.pos[0] - 7, k.pos[1] - 3) for k in detect_keypoints(b)}
        inner = {p for p in pa if 25 <= p[0] <= 130 and 25 <= p[1] <= 90}
        assert inner
        hits = sum(any(abs(p[0] - q[0]) <= 1 and abs(p[1] - q[1]) <= 1 for q in pb) for p in inner)
        assert hits / len(inner) >= 0.9


def random_kps(rng, n, offset=0):
    out = []
    for i in range(n):
        d = rng.normal(size=256)
        out.append(Keypoint((float(i + offset), 0.0), 1.0, d / np.linalg.norm(d)))
    return out


class TestMatching:
    def test_identical_sets(self, rng):
        kps = random_kps(rng, 12)
        m = match_descriptors(kps, kps, 0.8)
        assert sorted(m) == sorted(Correspondence(k.pos, k.pos) for k in kps)

    def test_empty(self, rng):
        assert match_descriptors([], random_kps(rng, 3)) == []

    def test_distractors(self, rng):
        a = random_kps(rng, 10)
        b = a + random_kps(rng, 10, offset=100)
        m = match_descriptors(a, b, 0.8)
        assert sum(c.src == c.dst for c in m) >= 8

    def test_ratio_validation(self, rng):
        with pytest.raises(ValueError):
            match_descriptors(random_kps(rng, 2), random_kps(rng, 2), 0)
