import numpy as np
import pytest
from scipy import ndimage

from abmat import metrics
from abmat.metrics import (CONN_STEP, CONN_THETA, GRAD_SIGMA, bg_difference,
                           connectivity_error, evaluate_frames, gradient_error,
                           largest_connected_component, mse, sad)


# ---------------------------------------------------------------------------
# literal-transcription oracles, kept deliberately naive


def oracle_sad(pred, gt):
    total = 0.0
    for y in range(pred.shape[0]):
        for x in range(pred.shape[1]):
            total += abs(pred[y, x] - gt[y, x])
    return total / pred.size * 1e3


def oracle_mse(pred, gt):
    total = 0.0
    for y in range(pred.shape[0]):
        for x in range(pred.shape[1]):
            total += (pred[y, x] - gt[y, x]) ** 2
    return total / pred.size * 1e3


def oracle_grad_magnitude(m, sigma=GRAD_SIGMA):
    radius = int(np.ceil(3 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-xs ** 2 / (2 * sigma ** 2))
    g = g / g.sum()
    dg = -xs / sigma ** 2 * g
    h, w = m.shape
    gx = np.zeros_like(m)
    gy = np.zeros_like(m)
    for y in range(h):
        for x in range(w):
            ax = ay = 0.0
            for i in range(-radius, radius + 1):
                for j in range(-radius, radius + 1):
                    yy = min(max(y + i, 0), h - 1)
                    xx = min(max(x + j, 0), w - 1)
                    ax += g[i + radius] * dg[j + radius] * m[yy, xx]
                    ay += dg[i + radius] * g[j + radius] * m[yy, xx]
            gx[y, x] = ax
            gy[y, x] = ay
    return np.sqrt(gx ** 2 + gy ** 2)


def oracle_gradient_error(pred, gt):
    dp = oracle_grad_magnitude(pred)
    dg = oracle_grad_magnitude(gt)
    return ((dp - dg) ** 2).mean() * 1e3


def oracle_connected_to(binary, seeds):
    """BFS 4-connectivity from seed pixels within a binary map."""
    h, w = binary.shape
    reach = np.zeros_like(binary, dtype=bool)
    stack = [(y, x) for y in range(h) for x in range(w)
             if seeds[y, x] and binary[y, x]]
    for y, x in stack:
        reach[y, x] = True
    while stack:
        y, x = stack.pop()
        for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and binary[ny, nx] and not reach[ny, nx]:
                reach[ny, nx] = True
                stack.append((ny, nx))
    return reach


def oracle_connectivity_error(pred, gt):
    inter = (pred >= 0.5) & (gt >= 0.5)
    labels, n = ndimage.label(inter, structure=metrics.FOUR_CONN)
    omega = np.zeros_like(inter)
    if n:
        sizes = np.bincount(labels.ravel())
        sizes[0] = 0
        best = sizes.max()
        flat = labels.ravel()
        winner = flat[(sizes[flat] == best).argmax()]
        omega = labels == winner
    phis = []
    for m in (pred, gt):
        levels = np.zeros_like(m)
        if omega.any():
            for t in np.arange(0.0, 1.0, CONN_STEP):
                reach = oracle_connected_to(m >= t, omega)
                levels[reach] = t
        d = m - levels
        phis.append(1.0 - d * (d >= CONN_THETA))
    return np.abs(phis[0] - phis[1]).mean() * 1e3


def random_mattes(seed, n=20, size=8):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        yield rng.uniform(size=(size, size)), rng.uniform(size=(size, size))


class TestSadMse:
    def test_zero_when_equal(self):
        m = np.random.default_rng(0).uniform(size=(6, 6))
        assert sad(m, m) == 0.0
        assert mse(m, m) == 0.0

    def test_constant_error(self):
        gt = np.full((4, 4), 0.5)
        assert sad(gt + 0.004, gt) == pytest.approx(4.0)
        assert mse(gt + 0.02, gt) == pytest.approx(0.4)

    def test_matches_loop_oracle(self):
        for pred, gt in random_mattes(1):
            assert sad(pred, gt) == pytest.approx(oracle_sad(pred, gt), abs=1e-9)
            assert mse(pred, gt) == pytest.approx(oracle_mse(pred, gt), abs=1e-9)

    def test_symmetric(self):
        for pred, gt in random_mattes(2, n=5):
            assert sad(pred, gt) == sad(gt, pred)
            assert mse(pred, gt) == mse(gt, pred)


class TestGradientError:
    def test_zero_when_equal(self):
        m = np.random.default_rng(3).uniform(size=(8, 8))
        assert gradient_error(m, m) == 0.0

    def test_constants_have_zero_gradient(self):
        assert gradient_error(np.full((8, 8), 0.2), np.full((8, 8), 0.9)) == \
            pytest.approx(0.0, abs=1e-18)

    def test_shifted_step_edge_positive(self):
        pred = np.zeros((16, 16))
        pred[:, 8:] = 1.0
        gt = np.zeros((16, 16))
        gt[:, 10:] = 1.0
        got = gradient_error(pred, gt)
        assert got > 0.0
        assert got == pytest.approx(oracle_gradient_error(pred, gt), abs=1e-9)

    def test_matches_reference_convolution(self):
        for pred, gt in random_mattes(4, n=5):
            assert gradient_error(pred, gt) == pytest.approx(
                oracle_gradient_error(pred, gt), abs=1e-9)

    def test_symmetric(self):
        for pred, gt in random_mattes(5, n=3):
            assert gradient_error(pred, gt) == gradient_error(gt, pred)


class TestLargestConnectedComponent:
    def test_all_false(self):
        out = largest_connected_component(np.zeros((4, 4), dtype=bool))
        assert not out.any()

    def test_all_true(self):
        out = largest_connected_component(np.ones((3, 3), dtype=bool))
        assert out.all()

    def test_picks_bigger_blob(self):
        m = np.zeros((6, 6), dtype=bool)
        m[0, 0:3] = True            # size 3
        m[3:5, 3:5] = True
        m[5, 3] = True              # size 5
        out = largest_connected_component(m)
        assert out.sum() == 5
        assert out[3, 3] and not out[0, 0]

    def test_diagonal_not_connected(self):
        m = np.zeros((4, 4), dtype=bool)
        m[0, 0] = m[1, 1] = True
        out = largest_connected_component(m)
        assert out.sum() == 1

    def test_tie_breaks_to_lowest_pixel(self):
        m = np.zeros((3, 5), dtype=bool)
        m[0, 0] = True
        m[2, 4] = True
        out = largest_connected_component(m)
        assert out[0, 0] and not out[2, 4]


class TestConnectivityError:
    def test_zero_when_equal(self):
        rng = np.random.default_rng(6)
        m = rng.uniform(size=(8, 8))
        assert connectivity_error(m, m) == 0.0

    def test_identical_binary_blob(self):
        m = np.zeros((8, 8))
        m[2:6, 2:6] = 1.0
        assert connectivity_error(m, m) == 0.0

    def test_detached_satellite_blob(self):
        gt = np.zeros((16, 16))
        gt[4:10, 4:10] = 1.0
        pred = gt.copy()
        pred[13:15, 13:15] = 0.4
        got = connectivity_error(pred, gt)
        assert got > 0.0
        assert got == pytest.approx(oracle_connectivity_error(pred, gt), abs=1e-9)

    def test_matches_literal_oracle(self):
        for pred, gt in random_mattes(7, n=5):
            assert connectivity_error(pred, gt) == pytest.approx(
                oracle_connectivity_error(pred, gt), abs=1e-9)

    def test_empty_omega_convention(self):
        pred = np.full((6, 6), 0.4)
        gt = np.full((6, 6), 0.3)
        # no jointly confident region; levels are all zero
        expected = oracle_connectivity_error(pred, gt)
        assert connectivity_error(pred, gt) == pytest.approx(expected, abs=1e-12)


class TestFlipInvariance:
    @staticmethod
    def smooth_mattes(seed, n=5, size=16):
        """Random smooth matte pairs whose confident overlap has a unique
        largest component, so the component tie-break cannot interfere."""
        rng = np.random.default_rng(seed)
        out = []
        while len(out) < n:
            pred = ndimage.gaussian_filter(rng.uniform(size=(size, size)), 2.0)
            gt = ndimage.gaussian_filter(rng.uniform(size=(size, size)), 2.0)
            for m in (pred, gt):
                m -= m.min()
                m /= m.max()
            labels, k = ndimage.label((pred >= 0.5) & (gt >= 0.5),
                                      structure=metrics.FOUR_CONN)
            sizes = np.bincount(labels.ravel())[1:]
            if k == 0 or (sizes == sizes.max()).sum() == 1:
                out.append((pred, gt))
        return out

    def test_all_metrics_flip_invariant(self):
        for pred, gt in self.smooth_mattes(8):
            fp, fg = pred[:, ::-1], gt[:, ::-1]
            assert sad(pred, gt) == pytest.approx(sad(fp, fg), abs=1e-12)
            assert mse(pred, gt) == pytest.approx(mse(fp, fg), abs=1e-12)
            assert gradient_error(pred, gt) == pytest.approx(
                gradient_error(fp, fg), abs=1e-12)
            assert connectivity_error(pred, gt) == pytest.approx(
                connectivity_error(fp, fg), abs=1e-12)


class TestBgDifference:
    def test_identical(self):
        f = np.random.default_rng(9).uniform(size=(4, 4, 3))
        assert bg_difference(f, f) == 0.0

    def test_constant_offset(self):
        f = np.full((4, 4, 3), 0.4)
        assert bg_difference(f + 0.1, f) == pytest.approx(0.1)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(10)
        a = rng.uniform(size=(5, 5, 3))
        b = rng.uniform(size=(5, 5, 3))
        total = 0.0
        for y in range(5):
            for x in range(5):
                total += sum(abs(a[y, x, c] - b[y, x, c]) for c in range(3)) / 3.0
        assert bg_difference(a, b) == pytest.approx(total / 25.0)


class TestEvaluate:
    def test_perfect_prediction_zero_report(self):
        mattes = [np.random.default_rng(11).uniform(size=(6, 6)) for _ in range(3)]
        report, rows = evaluate_frames(mattes, [m.copy() for m in mattes])
        assert report.sad == report.mse == report.gradient == report.connectivity == 0.0
        assert report.n_frames == 3 and len(rows) == 3

    def test_single_frame_equals_per_frame(self):
        rng = np.random.default_rng(12)
        p, g = rng.uniform(size=(6, 6)), rng.uniform(size=(6, 6))
        report, rows = evaluate_frames([p], [g])
        assert report.sad == rows[0]["sad"] == sad(p, g)

    def test_two_frames_mean(self):
        rng = np.random.default_rng(13)
        ps = [rng.uniform(size=(6, 6)) for _ in range(2)]
        gs = [rng.uniform(size=(6, 6)) for _ in range(2)]
        report, rows = evaluate_frames(ps, gs)
        assert report.mse == pytest.approx((rows[0]["mse"] + rows[1]["mse"]) / 2.0)
