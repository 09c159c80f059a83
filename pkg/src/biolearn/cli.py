"""Command-line surface: fetch, train, eval, attack, analyze, fewshot, gradcheck.

Configuration precedence: built-in defaults < config file (YAML tree) <
command-line flags. Every training run writes a manifest (the resolved
configuration, package version, seed, and dataset checksums) before the
first update step; artifacts land via write-new + atomic rename.

Exit codes: 0 success, 2 usage/data errors, 3 numeric failures.

Only stdlib is imported at module level so that ``--threads`` can pin the
BLAS thread count before numpy loads (required for the bit-exact
single-threaded reference mode).
"""

from __future__ import annotations

import argparse
import copy
import datetime
import os
import sys
import tempfile

from .errors import (BiolearnError, DegenerateInputError, FormatError,
                     NumericError, ParameterError, ShapeError)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3

DEFAULTS = {
    "dataset": "mnist",
    "data_dir": None,           # falls back to $BIOLEARN_DATA_DIR
    "rule": "bio",
    "nonneg": False,
    "hidden": "2000",           # "w1,w2,..." or "WxL"
    "epochs": None,             # rule-dependent: bio 50, bp 30
    "batch_size": None,         # rule-dependent: bio 2000, bp 128
    "seed": 0,
    "eta": 0.0005,
    "sigma2": 0.00016,
    "alpha": 0.04,
    "beta_wp": 87500.0,
    "gamma": 0.04,
    "beta_norm": 1.0,
    "eq4_mode": "literal",
    "eq5_signal": "softmax",
    "hebb_signal": "activation",
    "output_rule": "wp",
    "bp_lr": 0.1,
    "balanced": None,           # rule-dependent: bio True, bp False
    "threads": None,
    "out": "runs/run",
    "attack": {
        "method": "pgd",
        "eps": [0.0, 0.02, 0.05, 0.1, 0.2],
        "step": 0.01,
        "iters": 40,
        "random_start": False,
        "batch_size": 1000,
    },
    "analysis": {"threshold": 0.005, "layer": 0, "bins": 64},
    "fewshot": {"shots": [1, 10, 100], "n_seeds": 5, "epochs": 200},
    "fetch": {"sources": []},
}


def parse_hidden(spec: str) -> tuple[int, ...]:
    """'2000' -> (2000,); '2000,500' -> (2000,500); '2000x10' -> 10x2000."""
    spec = str(spec).strip()
    try:
        if "x" in spec:
            width, depth = spec.split("x")
            return (int(width),) * int(depth)
        return tuple(int(tok) for tok in spec.split(",") if tok)
    except ValueError as exc:
        raise ParameterError(f"cannot parse --hidden {spec!r}: {exc}") from exc


def parse_float_list(spec) -> list[float]:
    if isinstance(spec, (list, tuple)):
        return [float(v) for v in spec]
    try:
        return [float(tok) for tok in str(spec).split(",") if tok.strip()]
    except ValueError as exc:
        raise ParameterError(f"cannot parse list {spec!r}: {exc}") from exc


def parse_int_list(spec) -> list[int]:
    if isinstance(spec, (list, tuple)):
        return [int(v) for v in spec]
    try:
        return [int(tok) for tok in str(spec).split(",") if tok.strip()]
    except ValueError as exc:
        raise ParameterError(f"cannot parse list {spec!r}: {exc}") from exc


def _deep_merge(base: dict, overlay: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in overlay.items():
        if key not in out:
            raise ParameterError(f"unknown config key {key!r}")
        if isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def resolve_config(args: argparse.Namespace) -> dict:
    """defaults < config file < CLI flags; fills rule-dependent defaults."""
    cfg = copy.deepcopy(DEFAULTS)
    path = getattr(args, "config", None)
    if path:
        import yaml
        with open(path) as f:
            loaded = yaml.safe_load(f) or {}
        if not isinstance(loaded, dict):
            raise FormatError(f"{path}: config must be a mapping")
        cfg = _deep_merge(cfg, loaded)

    flag_map = {
        "dataset": "dataset", "data_dir": "data_dir", "rule": "rule",
        "nonneg": "nonneg", "hidden": "hidden", "epochs": "epochs",
        "batch_size": "batch_size", "seed": "seed", "eta": "eta",
        "sigma2": "sigma2", "alpha": "alpha", "beta_wp": "beta_wp",
        "gamma": "gamma", "beta_norm": "beta_norm", "eq4_mode": "eq4_mode",
        "eq5_signal": "eq5_signal", "hebb_signal": "hebb_signal",
        "output_rule": "output_rule",
        "bp_lr": "bp_lr", "balanced": "balanced", "threads": "threads",
        "out": "out",
    }
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            cfg[key] = value
    for section, names in (("attack", ("method", "step", "iters", "random_start")),
                           ("analysis", ("threshold", "layer", "bins")),
                           ("fewshot", ("n_seeds",))):
        for name in names:
            value = getattr(args, name, None)
            if value is not None:
                cfg[section][name] = value
    if getattr(args, "eps", None) is not None:
        cfg["attack"]["eps"] = parse_float_list(args.eps)
    if getattr(args, "shots", None) is not None:
        cfg["fewshot"]["shots"] = parse_int_list(args.shots)
    if getattr(args, "attack_batch", None) is not None:
        cfg["attack"]["batch_size"] = args.attack_batch
    if getattr(args, "fewshot_epochs", None) is not None:
        cfg["fewshot"]["epochs"] = args.fewshot_epochs

    if cfg["epochs"] is None:
        cfg["epochs"] = 50 if cfg["rule"] == "bio" else 30
    if cfg["batch_size"] is None:
        cfg["batch_size"] = 2000 if cfg["rule"] == "bio" else 128
    if cfg["balanced"] is None:
        cfg["balanced"] = cfg["rule"] == "bio"
    return cfg


def _apply_thread_limit(argv):
    """Pin BLAS/OpenMP threads before numpy is imported anywhere."""
    threads = None
    for i, tok in enumerate(argv):
        if tok == "--threads" and i + 1 < len(argv):
            threads = argv[i + 1]
        elif tok.startswith("--threads="):
            threads = tok.split("=", 1)[1]
    if threads is not None:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(threads)


def _write_text_atomic(text: str, path: str):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".out.")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _load_split(cfg: dict, split: str):
    from . import data
    data_dir = data.resolve_data_dir(cfg.get("data_dir"))
    return data.load_named_dataset(cfg["dataset"], data_dir, split)


def _build_model(cfg: dict, n_features: int, num_classes: int, rng):
    from . import network
    arch = network.Architecture(
        input_dim=n_features,
        hidden_dims=parse_hidden(cfg["hidden"]),
        output_dim=num_classes,
        nonneg=bool(cfg["nonneg"]),
        beta_norm=float(cfg["beta_norm"]),
    )
    return network.init_model(arch, rng)


def _write_manifest(cfg: dict, out_dir: str, extra: dict):
    from . import __version__, jsonio
    manifest = {
        "config": cfg,
        "version": __version__,
        "seed": cfg["seed"],
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    manifest.update(extra)
    jsonio.dump_atomic(manifest, os.path.join(out_dir, "manifest.json"))


def cmd_train(args) -> int:
    from . import data, jsonio, network, plasticity
    from .numerics import Rng

    cfg = resolve_config(args)
    ds_train = _load_split(cfg, "train")
    ds_test = _load_split(cfg, "test")
    rng = Rng(int(cfg["seed"]))
    model = _build_model(cfg, ds_train.n_features, ds_train.num_classes, rng)

    out_dir = cfg["out"]
    os.makedirs(out_dir, exist_ok=True)
    checksums = data.dataset_checksums(cfg["dataset"], data.resolve_data_dir(cfg.get("data_dir")))
    _write_manifest(cfg, out_dir, {"dataset_checksums": checksums, "command": "train"})

    metrics_path = os.path.join(out_dir, "metrics.jsonl")
    partial = metrics_path + ".partial"
    reports = []
    with open(partial, "w") as metrics_file:
        def sink(report):
            metrics_file.write(jsonio.dumps(report.to_dict()) + "\n")
            metrics_file.flush()
            reports.append(report)

        if cfg["rule"] == "bio":
            hp = plasticity.BioHyperParams(
                eta=float(cfg["eta"]), sigma2=float(cfg["sigma2"]),
                alpha=float(cfg["alpha"]), beta_wp=float(cfg["beta_wp"]),
                gamma=float(cfg["gamma"]), batch_size=int(cfg["batch_size"]),
                epochs=int(cfg["epochs"]), balanced=bool(cfg["balanced"]),
                eq4_mode=cfg["eq4_mode"], eq5_signal=cfg["eq5_signal"],
                hebb_signal=cfg["hebb_signal"],
                output_rule=cfg["output_rule"], bp_output_lr=float(cfg["bp_lr"]),
            )
            plasticity.train_bio(model, ds_train, ds_test, hp, rng, metrics_sink=sink)
        elif cfg["rule"] == "bp":
            hp = plasticity.BpHyperParams(
                lr=float(cfg["bp_lr"]), batch_size=int(cfg["batch_size"]),
                epochs=int(cfg["epochs"]), balanced=bool(cfg["balanced"]),
            )
            plasticity.train_bp(model, ds_train, ds_test, hp, rng, metrics_sink=sink)
        else:
            raise ParameterError(f"unknown rule {cfg['rule']!r}")
    os.replace(partial, metrics_path)

    model_path = os.path.join(out_dir, "model.biomlp")
    network.save_model(model, model_path)
    final_acc = reports[-1].test_acc if reports else network.accuracy(model, ds_test)
    print(f"trained {cfg['rule']} model -> {model_path}  test_acc={final_acc:.17g}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from . import jsonio, network

    cfg = resolve_config(args)
    model = network.load_model(args.model)
    ds = _load_split(cfg, args.split)
    acc = network.accuracy(model, ds)
    print(format(acc, ".17g"))
    if args.out:
        jsonio.dump_atomic(
            {"model": args.model, "dataset": cfg["dataset"], "split": args.split,
             "n_samples": ds.n_samples, "accuracy": acc}, args.out)
    return EXIT_OK


def cmd_attack(args) -> int:
    from . import attacks, network
    from .numerics import Rng

    cfg = resolve_config(args)
    model = network.load_model(args.model)
    ds = _load_split(cfg, args.split)
    a = cfg["attack"]
    attack_cfg = attacks.AttackConfig(
        method=a["method"], step=float(a["step"]), iters=int(a["iters"]),
        random_start=bool(a["random_start"]), batch_size=int(a["batch_size"]))
    curve = attacks.robustness_sweep(
        model, ds, a["method"], a["eps"], attack_cfg,
        rng=Rng(int(cfg["seed"])) if a["random_start"] else None)
    csv = curve.to_csv()
    if args.out:
        _write_text_atomic(csv, args.out)
        print(f"robustness curve -> {args.out}")
    else:
        sys.stdout.write(csv)
    return EXIT_OK


def cmd_analyze(args) -> int:
    from . import analysis, jsonio, network

    cfg = resolve_config(args)
    model = network.load_model(args.model)
    opts = cfg["analysis"]
    layer = int(opts["layer"])
    if not 0 <= layer < len(model.weights):
        raise ParameterError(
            f"--layer {layer} out of range (model has {len(model.weights)} weight matrices)")
    threshold = float(opts["threshold"])
    w = model.weights[layer]

    sample = analysis.weight_sample(w, threshold)
    exact_zero, below = analysis.sparsity(w, threshold)
    ln_fit = analysis.fit_lognormal(sample.values)
    wb_fit = analysis.fit_weibull(sample.values)

    decorrelation = None
    note = "no dataset given; pass --dataset/--data-dir to compute activations"
    if cfg.get("data_dir") or os.environ.get("BIOLEARN_DATA_DIR"):
        try:
            ds = _load_split(cfg, args.split)
            x = ds.inputs[:10000]
            decorrelation = analysis.activation_decorrelation(model, x)
            note = f"final hidden layer over {len(x)} {cfg['dataset']} {args.split} samples"
        except (FileNotFoundError, BiolearnError) as exc:
            note = f"decorrelation unavailable: {exc}"

    report = {
        "model": args.model,
        "layer": layer,
        "threshold": threshold,
        "n_total": sample.n_total,
        "n_below_threshold": sample.n_below_threshold,
        "sparsity": {"exact_zero": exact_zero, "below_threshold": below},
        "lognormal": ln_fit.to_dict(),
        "weibull": wb_fit.to_dict(),
        "decorrelation": decorrelation,
        "decorrelation_note": note,
    }
    if args.out:
        jsonio.dump_atomic(report, args.out)
        print(f"analysis -> {args.out}")
    else:
        print(jsonio.dumps(report, indent=2))
    if args.hist:
        rows = analysis.histogram_with_fits(sample, ln_fit, wb_fit, int(opts["bins"]))
        lines = ["bin_lo,bin_hi,count,lognormal_pdf,weibull_pdf"]
        lines += [
            f'{r["bin_lo"]:.17g},{r["bin_hi"]:.17g},{r["count"]},'
            f'{r["lognormal_pdf"]:.17g},{r["weibull_pdf"]:.17g}'
            for r in rows
        ]
        _write_text_atomic("\n".join(lines) + "\n", args.hist)
        print(f"histogram -> {args.hist}")
    return EXIT_OK


def _make_trainer(cfg: dict):
    """Closure training a fresh model on a (sub)dataset for fewshot runs."""
    from . import plasticity

    def train_model(subset, rng):
        model = _build_model(cfg, subset.n_features, subset.num_classes, rng)
        batch = min(int(cfg["batch_size"]), subset.n_samples)
        epochs = int(cfg["fewshot"]["epochs"])
        if cfg["rule"] == "bio":
            hp = plasticity.BioHyperParams(
                eta=float(cfg["eta"]), sigma2=float(cfg["sigma2"]),
                alpha=float(cfg["alpha"]), beta_wp=float(cfg["beta_wp"]),
                gamma=float(cfg["gamma"]), batch_size=batch, epochs=epochs,
                balanced=bool(cfg["balanced"]), eq4_mode=cfg["eq4_mode"],
                eq5_signal=cfg["eq5_signal"], hebb_signal=cfg["hebb_signal"],
                output_rule=cfg["output_rule"], bp_output_lr=float(cfg["bp_lr"]))
            model, _ = plasticity.train_bio(model, subset, subset, hp, rng)
        else:
            hp = plasticity.BpHyperParams(
                lr=float(cfg["bp_lr"]), batch_size=batch, epochs=epochs,
                balanced=bool(cfg["balanced"]))
            model, _ = plasticity.train_bp(model, subset, subset, hp, rng)
        return model

    return train_model


def cmd_fewshot(args) -> int:
    from . import analysis, jsonio
    from .numerics import Rng

    cfg = resolve_config(args)
    ds_train = _load_split(cfg, "train")
    ds_test = _load_split(cfg, "test")
    rng = Rng(int(cfg["seed"]))
    trainer = _make_trainer(cfg)

    reports = []
    for i, shots in enumerate(cfg["fewshot"]["shots"]):
        rep = analysis.few_shot_eval(trainer, ds_train, ds_test, int(shots),
                                     int(cfg["fewshot"]["n_seeds"]), rng.child(i))
        reports.append(rep.to_dict())
        print(f"shots={shots}: mean={rep.mean:.4f} std={rep.std:.4f}")
    payload = {"rule": cfg["rule"], "nonneg": cfg["nonneg"],
               "n_seeds": cfg["fewshot"]["n_seeds"],
               "epochs": cfg["fewshot"]["epochs"], "seed": cfg["seed"],
               "reports": reports}
    if args.out:
        jsonio.dump_atomic(payload, args.out)
        print(f"fewshot report -> {args.out}")
    else:
        print(jsonio.dumps(payload, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradient checking


def finite_difference_param_grads(model, X, labels, h: float = 1e-6):
    """Central-difference loss gradients w.r.t. every parameter (eval mode)."""
    import numpy as np

    from ._backprop import cross_entropy
    from .network import forward

    def loss():
        return cross_entropy(forward(model, X, "eval").logits, labels)

    grads = []
    for w in model.weights:
        g = np.zeros_like(w)
        flat = w.ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            up = loss()
            flat[idx] = orig - h
            down = loss()
            flat[idx] = orig
            g.ravel()[idx] = (up - down) / (2 * h)
        grads.append(g)
    gb = np.zeros_like(model.bias)
    for idx in range(model.bias.size):
        orig = model.bias[idx]
        model.bias[idx] = orig + h
        up = loss()
        model.bias[idx] = orig - h
        down = loss()
        model.bias[idx] = orig
        gb[idx] = (up - down) / (2 * h)
    return grads, gb


def finite_difference_input_grads(model, X, labels, h: float = 1e-6):
    import numpy as np

    from ._backprop import cross_entropy
    from .network import forward

    g = np.zeros_like(X)
    flat = X.ravel()
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + h
        up = cross_entropy(forward(model, X, "eval").logits, labels)
        flat[idx] = orig - h
        down = cross_entropy(forward(model, X, "eval").logits, labels)
        flat[idx] = orig
        g.ravel()[idx] = (up - down) / (2 * h)
    return g


def _rel_err(a, b) -> float:
    import numpy as np
    scale = max(float(np.max(np.abs(b))), 1e-8)
    return float(np.max(np.abs(a - b))) / scale


def gradcheck_report(n_trials: int = 10, seed: int = 2024,
                     corrupt=None) -> tuple[bool, list[str]]:
    """Compare analytic gradients against central differences.

    Random 6-4-3 nets in both forward modes; parameters must agree to
    1e-5 relative error, inputs to 1e-4. ``corrupt(grads)`` lets tests
    verify that the harness catches wrong gradients.
    """
    import numpy as np

    from ._backprop import backward
    from .network import Architecture, forward, init_model
    from .numerics import Rng

    param_tol, input_tol = 1e-5, 1e-4
    lines, ok = [], True
    for trial in range(n_trials):
        for nonneg in (False, True):
            rng = Rng(seed).child(trial).child(int(nonneg))
            arch = Architecture(6, (4,), 3, nonneg=nonneg)
            model = init_model(arch, rng)
            if nonneg:
                warm = rng.uniform(0.0, 1.0, 5 * 6).reshape(5, 6)
                forward(model, warm, mode="train")  # seed running stats
            X = rng.uniform(0.0, 1.0, 8 * 6).reshape(8, 6)
            labels = np.arange(8) % 3

            grads = backward(model, forward(model, X, "eval"), labels,
                             wrt_params=True, wrt_inputs=True)
            if corrupt is not None:
                corrupt(grads)
            fd_w, fd_b = finite_difference_param_grads(model, X, labels)
            fd_x = finite_difference_input_grads(model, X, labels)

            mode = "nonneg" if nonneg else "standard"
            errs = [_rel_err(grads.weights[i], fd_w[i]) for i in range(len(fd_w))]
            errs.append(_rel_err(grads.bias, fd_b))
            err_x = _rel_err(grads.inputs, fd_x)
            worst = max(errs)
            passed = worst < param_tol and err_x < input_tol
            ok = ok and passed
            per_layer = " ".join(f"layer{i}={e:.3g}" for i, e in enumerate(errs[:-1]))
            lines.append(
                f"net {trial:02d} {mode:8s} {per_layer} bias={errs[-1]:.3g} "
                f"inputs={err_x:.3g} {'ok' if passed else 'FAIL'}")
    return ok, lines


def cmd_gradcheck(args) -> int:
    seed = 2024 if args.seed is None else args.seed
    ok, lines = gradcheck_report(n_trials=args.trials, seed=seed)
    for line in lines:
        print(line)
    print("gradcheck:", "pass" if ok else "FAIL")
    return EXIT_OK if ok else 1


def cmd_fetch(args) -> int:
    from . import data

    cfg = resolve_config(args)
    sources = cfg["fetch"]["sources"]
    if not sources:
        raise ParameterError(
            "no fetch sources configured; add fetch.sources entries "
            "(url, sha256, unpack) to the config file")
    dest = data.resolve_data_dir(cfg.get("data_dir"))
    for src in sources:
        written = data.fetch_file(src["url"], dest, src["sha256"],
                                  src.get("unpack", "none"))
        for path in written:
            print(f"ok {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biolearn",
        description="Bio-inspired Hebbian/weight-perturbation training, "
                    "adversarial evaluation, and weight-distribution analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="YAML config file (flags override it)")
        p.add_argument("--dataset", choices=["mnist", "cifar10"])
        p.add_argument("--data-dir", dest="data_dir")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int,
                       help="BLAS thread count; 1 = bit-exact reference mode")

    def add_train_flags(p):
        p.add_argument("--rule", choices=["bio", "bp"])
        p.add_argument("--nonneg", action=argparse.BooleanOptionalAction, default=None)
        p.add_argument("--hidden", help="layer widths: 'w1,w2,...' or 'WxL'")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--eta", type=float)
        p.add_argument("--sigma2", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta-wp", dest="beta_wp", type=float)
        p.add_argument("--gamma", type=float)
        p.add_argument("--beta-norm", dest="beta_norm", type=float)
        p.add_argument("--eq4-mode", dest="eq4_mode", choices=["literal", "eta_free"])
        p.add_argument("--eq5-signal", dest="eq5_signal", choices=["softmax", "linear"])
        p.add_argument("--hebb-signal", dest="hebb_signal",
                       choices=["activation", "linear"])
        p.add_argument("--output-rule", dest="output_rule", choices=["wp", "bp"])
        p.add_argument("--bp-lr", dest="bp_lr", type=float)
        p.add_argument("--balanced", action=argparse.BooleanOptionalAction, default=None)

    p = sub.add_parser("fetch", help="download dataset files listed in the config")
    add_common(p)
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("train", help="train a model and write run artifacts")
    add_common(p)
    add_train_flags(p)
    p.add_argument("--out", help="output directory for model/metrics/manifest")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy of a saved model on a dataset")
    add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--out", help="also write a JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("attack", help="FGSM/PGD robustness sweep -> CSV")
    add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--method", choices=["fgsm", "pgd"])
    p.add_argument("--eps", help="comma-separated ascending epsilon list")
    p.add_argument("--step", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--random-start", dest="random_start",
                   action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--attack-batch", dest="attack_batch", type=int)
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("analyze", help="weight-distribution and decorrelation report")
    add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--threshold", type=float)
    p.add_argument("--layer", type=int)
    p.add_argument("--bins", type=int)
    p.add_argument("--out", help="JSON output path (default: stdout)")
    p.add_argument("--hist", help="also write the histogram CSV here")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("fewshot", help="k-shot training/evaluation over seeds")
    add_common(p)
    add_train_flags(p)
    p.add_argument("--shots", help="comma-separated shot counts")
    p.add_argument("--n-seeds", dest="n_seeds", type=int)
    p.add_argument("--fewshot-epochs", dest="fewshot_epochs", type=int)
    p.add_argument("--out", help="JSON output path (default: stdout)")
    p.set_defaults(func=cmd_fewshot)

    p = sub.add_parser("gradcheck", help="verify gradients against finite differences")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _apply_thread_limit(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, FormatError, ShapeError, DegenerateInputError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
