#!/usr/bin/env python3
"""Smoke test for the `decaptcha` Python extension.

Builds nothing itself: run `cargo build -p decaptcha-py` first (or
`--release`), then `python3 python/smoke_test.py`. The script copies the
built cdylib next to a temp directory under the module name Python
expects, imports it, and exercises the main surface end to end on a tiny
corpus.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def locate_library() -> Path:
    candidates = [
        REPO / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libdecaptcha.so", "libdecaptcha.dylib", "decaptcha.dll")
    ]
    for path in candidates:
        if path.exists():
            return path
    sys.exit(
        "decaptcha library not found; run `cargo build -p decaptcha-py` first"
    )


def import_module(workdir: Path):
    lib = locate_library()
    suffix = ".so" if lib.suffix in (".so", ".dylib") else ".pyd"
    target = workdir / f"decaptcha{suffix}"
    shutil.copyfile(lib, target)
    sys.path.insert(0, str(workdir))
    import decaptcha  # noqa: E402

    return decaptcha


def approx(a: float, b: float, tol: float = 1e-9) -> bool:
    return abs(a - b) <= tol


def main() -> None:
    checks = 0

    def ok(name: str, cond: bool) -> None:
        nonlocal checks
        if not cond:
            sys.exit(f"FAIL: {name}")
        checks += 1
        print(f"ok: {name}")

    with tempfile.TemporaryDirectory() as tmp:
        work = Path(tmp)
        dc = import_module(work)

        # metrics: the worked 123456 vs 2456 example
        ok("dtw_cost worked example", dc.dtw_cost("123456", "2456") == 2)
        ok(
            "digit_accuracy worked example",
            approx(dc.digit_accuracy([("123456", "2456")]), 4.0 / 6.0, 1e-12),
        )
        ok(
            "captcha_accuracy counts exact matches",
            approx(dc.captcha_accuracy([("04648", "04648"), ("123", "124")]), 0.5),
        )

        # kernel identities
        ok("rbf kernel at zero distance", dc.rbf_kernel([1.0, 2.0], [1.0, 2.0], 1.0) == 1.0)
        ok(
            "rbf kernel closed form",
            approx(dc.rbf_kernel([0.0], [1.0], 1.0), math.exp(-1.0), 1e-12),
        )

        # synthesis and features
        a = dc.render_digit(7, seed=11)
        b = dc.render_digit(7, seed=11)
        ok("render_digit deterministic", a.samples == b.samples)
        ok("render_digit length", len(a) == 3200 and a.sample_rate == 8000)
        ok("feature vector dimension", len(dc.features(a)) == dc.FEATURE_DIM == 546)

        clip, onsets = dc.synth_captcha("04648", seed=5)
        starts = dc.detect_starts(clip)
        ok("one candidate per digit", len(starts) == len(onsets) == 5)
        ok(
            "candidates near onsets",
            all(abs(s - o) <= 0.05 for s, o in zip(starts, onsets)),
        )

        # wav round trip
        wav_path = work / "digit.wav"
        a.write(wav_path)
        back = dc.AudioClip.read(wav_path)
        ok(
            "wav round trip within quantization",
            max(abs(x - y) for x, y in zip(a.samples, back.samples)) <= 1.0 / 32768.0,
        )

        # tiny end-to-end: corpus -> train -> solve -> evaluate
        corpus = work / "corpus"
        manifest = dc.gen_corpus(corpus, n_train=12, n_test=3, seed=2024)
        model_path = work / "model.bin"
        dc.train(manifest, model_path, kind="proposed-svm", c=10.0, var=0.9)
        model = dc.SolverModel.load(model_path)
        ok("model records parameters", model.chosen_c == 10.0 and model.chosen_var == 0.9)
        ok("model has a PCA stage", model.pca_k is not None and model.pca_k > 0)

        prediction = model.solve_wav(corpus / "test_0000.wav")
        ok("solve returns digit string", prediction.isdigit() or prediction == "")

        report = dc.evaluate(model_path, manifest)
        ok(
            "evaluate returns both metrics",
            0.0 <= report["digit_accuracy"] <= 1.0
            and 0.0 <= report["captcha_accuracy"] <= 1.0
            and len(report["per_file"]) == 3,
        )

        silence = dc.AudioClip([0.0] * 8000, 8000)
        ok("silence solves to empty string", model.solve(silence) == "")

    print(f"smoke test passed ({checks} checks)")


if __name__ == "__main__":
    main()
