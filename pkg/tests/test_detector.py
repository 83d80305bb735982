import math
import os
import stat

import numpy as np
import pytest
from hypothesis import given, strategies as st

from scaleadapt.detector import (
    AdaptationError,
    DetectorError,
    FrameContext,
    SubprocessDetector,
    SurrogateDetector,
    SurrogatePrior,
    adapt_prior,
    detection_probability,
    dimension_mismatch,
    noise_std,
    score_mean,
    surrogate_detect,
)
from scaleadapt.geometry import Box3D, ScaleTriple


def truth_box(dims, cx=10.0, cy=0.0):
    return Box3D(cx, cy, dims[2] / 2, dims[0], dims[1], dims[2])


class TestSurrogateModel:
    def test_zero_mismatch(self):
        prior = SurrogatePrior(fp_rate=0.0)
        box = truth_box(prior.mean_dims)
        assert dimension_mismatch(prior, box.dims) == 0.0
        assert detection_probability(prior, 0.0) == 1.0
        assert noise_std(prior, 0.0) == prior.sigma0
        det = surrogate_detect(prior, [box], seed=1)
        assert len(det.boxes) == 1
        assert det.boxes[0].score >= 0.97

    def test_degenerate_parameters_count(self):
        prior = SurrogatePrior(fp_rate=0.0, p_min=1.0)
        truth = [truth_box((2.0, 1.0, 1.0), cx=5.0), truth_box((9.0, 3.0, 2.5), cx=30.0)]
        for seed in range(20):
            det = surrogate_detect(prior, truth, seed=seed)
            assert len(det.boxes) == len(truth)

    def test_deterministic(self):
        prior = SurrogatePrior(fp_rate=1.5, rng_seed=7)
        truth = [truth_box((4.0, 2.0, 1.4)), truth_box((5.0, 2.2, 1.9), cx=25.0)]
        a = surrogate_detect(prior, truth, seed=99)
        b = surrogate_detect(prior, truth, seed=99)
        assert a == b
        c = surrogate_detect(prior, truth, seed=100)
        assert a != c

    def test_noise_std_statistics(self):
        # Mismatch exactly 0.2 by inflating all dims by 20%.
        prior = SurrogatePrior(sigma0=0.05, beta=5.0, fp_rate=0.0, p_min=1.0)
        dims = tuple(1.2 * d for d in prior.mean_dims)
        assert dimension_mismatch(prior, dims) == pytest.approx(0.2)
        box = truth_box(dims)
        deviations = []
        for seed in range(1000):
            det = surrogate_detect(prior, [box], seed=seed)
            b = det.boxes[0]
            deviations.extend(
                [b.length - box.length, b.width - box.width, b.height - box.height,
                 b.cx - box.cx, b.cy - box.cy, b.cz - box.cz]
            )
        empirical = float(np.std(deviations))
        assert empirical == pytest.approx(0.05 * (1 + 5 * 0.2), rel=0.05)

    @given(
        m1=st.floats(min_value=0.0, max_value=2.0),
        m2=st.floats(min_value=0.0, max_value=2.0),
    )
    def test_closed_form_monotonicity(self, m1, m2):
        prior = SurrogatePrior()
        lo, hi = sorted((m1, m2))
        assert detection_probability(prior, hi) <= detection_probability(prior, lo)
        assert score_mean(prior, hi) <= score_mean(prior, lo)
        assert noise_std(prior, hi) >= noise_std(prior, lo)

    def test_empty_truth_only_false_positives(self):
        prior = SurrogatePrior(fp_rate=3.0)
        det = surrogate_detect(prior, [], seed=5)
        assert all(b.score <= 0.3 for b in det.boxes)

    def test_fp_rate_zero_no_spurious(self):
        prior = SurrogatePrior(fp_rate=0.0, p_min=1.0)
        det = surrogate_detect(prior, [], seed=5)
        assert det.boxes == ()


class TestAdaptPrior:
    def test_constant_mean(self):
        prior = SurrogatePrior()
        labels = [truth_box((4.0, 2.0, 1.5)) for _ in range(7)]
        adapted = adapt_prior(prior, labels)
        assert adapted.mean_dims == pytest.approx((4.0, 2.0, 1.5))

    def test_two_point_mean(self):
        prior = SurrogatePrior()
        labels = [truth_box((4.0, 2.0, 1.5)), truth_box((6.0, 2.0, 1.5))]
        assert adapt_prior(prior, labels).mean_dims == pytest.approx((5.0, 2.0, 1.5))

    def test_other_parameters_untouched(self):
        prior = SurrogatePrior(sigma0=0.07, alpha=2.0, beta=4.0, gamma=1.0,
                               fp_rate=0.5, p_min=0.1, rng_seed=3)
        adapted = adapt_prior(prior, [truth_box((5.0, 2.0, 1.5))])
        for fld in ("sigma0", "alpha", "beta", "gamma", "fp_rate", "p_min", "rng_seed"):
            assert getattr(adapted, fld) == getattr(prior, fld)

    def test_empty_error(self):
        with pytest.raises(AdaptationError):
            adapt_prior(SurrogatePrior(), [])

    def test_adaptation_reduces_mismatch(self):
        # Adapting toward the true target mean raises detection probability
        # on unscaled target scenes, via the closed-form model.
        prior = SurrogatePrior(mean_dims=(4.2, 1.8, 1.5))
        target_dims = (3.65, 1.57, 1.30)
        m_before = dimension_mismatch(prior, target_dims)
        adapted = adapt_prior(prior, [truth_box(target_dims) for _ in range(10)])
        m_after = dimension_mismatch(adapted, target_dims)
        assert m_after < m_before
        assert detection_probability(adapted, m_after) > detection_probability(
            prior, m_before
        )


class TestSurrogateDetectorHandle:
    def test_requires_truth(self):
        det = SurrogateDetector()
        ctx = FrameContext("s", "f", 0, ScaleTriple(1, 1, 1), seed=0)
        with pytest.raises(DetectorError, match="ground-truth"):
            det.detect(ctx)

    def test_reentrant_independent_frames(self):
        det = SurrogateDetector(SurrogatePrior(fp_rate=0.0, p_min=1.0))
        box = truth_box(det.prior.mean_dims)
        ctx1 = FrameContext("s", "a", 0, ScaleTriple(1, 1, 1), seed=1, truth_boxes=(box,))
        ctx2 = FrameContext("s", "b", 1, ScaleTriple(1, 1, 1), seed=2, truth_boxes=(box,))
        first = det.detect(ctx1)
        det.detect(ctx2)
        assert det.detect(ctx1) == first


FAKE_DETECTOR = """#!/usr/bin/env python3
import sys
cloud = sys.argv[1]
with open(cloud + ".labels.txt", "w") as fh:
    fh.write("Car 0 0 0 0 0 0 0 1.5 2.0 4.0 10 -2 1 0 0.9\\n")
"""


class TestSubprocessDetector:
    def _script(self, tmp_path, body):
        script = tmp_path / "detector.py"
        script.write_text(body)
        script.chmod(script.stat().st_mode | stat.S_IEXEC)
        return script

    def _ctx(self, seed=0):
        return FrameContext(
            "s", "000000", 0, ScaleTriple(1, 1, 1), seed=seed,
            load_cloud=lambda: np.zeros((4, 4)),
        )

    def test_round_trip(self, tmp_path):
        script = self._script(tmp_path, FAKE_DETECTOR)
        det = SubprocessDetector(
            command=("python3", str(script)), workdir=tmp_path / "work"
        )
        out = det.detect(self._ctx())
        assert len(out.boxes) == 1
        assert out.boxes[0].dims == (4.0, 2.0, 1.5)

    def test_nonzero_exit(self, tmp_path):
        script = self._script(tmp_path, "#!/usr/bin/env python3\nraise SystemExit(3)\n")
        det = SubprocessDetector(
            command=("python3", str(script)), workdir=tmp_path / "work"
        )
        with pytest.raises(DetectorError, match="exit 3"):
            det.detect(self._ctx())

    def test_missing_output(self, tmp_path):
        script = self._script(tmp_path, "#!/usr/bin/env python3\n")
        det = SubprocessDetector(
            command=("python3", str(script)), workdir=tmp_path / "work"
        )
        with pytest.raises(DetectorError, match="no output"):
            det.detect(self._ctx())
