"""Config-driven experiment workflows.

One JSON-style config dict in, one RunReport out.  Every model is fit
on training rows only; held-out rows enter through the Nystrom
extension or a fitted predictor.  Rerunning the same config produces
byte-identical reports and model files.

Config layout (each workflow reads only the sections it needs; unknown
keys anywhere are rejected):

    {
      "workflow": "direct_dmaps_nn",       # see WORKFLOW_NAMES
      "seed": 0,                           # default for every sub-seed
      "data": {"spectra": "x.csv", "sizes": "y.csv"},   # or {"synth": {...}}
      "pretreatment": {"region": "global", "baseline": "none",
                       "normalization": "none", "exclusions": []},
      "split": {"test_fraction": 0.25, "seed": 0},
      "dmaps": {"epsilon": null, "density_normalize": true, "n_eig": 10,
                "coords": "llr", "llr_threshold": 0.5},
      "regressor": {...},                  # MlpSpec or GbtSpec fields
      "altdmaps": {"n_eig": 10, "n_alt_coords": 6, "alt_regressor": "gh",
                   "size_regressor": "nn", ...},
      "yshaped": {...},                    # YShapedSpec fields
      "pls": {"k_max": 10, "folds": 5, "zscore": true},
      "ihm": {"model_json": "peaks.json", "mode": "medium"},
      "out_dir": "runs/exp1"               # optional; enables model persistence
    }
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .altdmaps import AltDmapModel, alt_coordinates, fit_altdmaps
from .conformal import (YShapedSpec, decode, encode, orthogonality_score,
                        predict_size, yae_fit)
from .dataset import SpectraSet, load_spectra, train_test_split
from .dmaps import (DmapModel, EigenSelection, GhModel, KernelParams,
                    fit_dmaps, gh_fit, gh_predict, local_linear_residual,
                    nystrom_extend)
from .errors import ConfigError, NumericError
from .gbt import GbtModel, GbtSpec, gbt_fit, gbt_predict
from .ihm import (HardModel, extract_parameters, fit_hard_model,
                  load_hard_model, save_hard_model)
from .metrics import compute_metrics
from .mlp import MlpModel, MlpSpec, mlp_fit, mlp_predict
from .pls import pls_choose_components, pls_fit, pls_predict
from .pretreat import (ColumnScaler, PretreatmentSpec, apply_column_scaler,
                       apply_pretreatment, fit_column_scaler)
from .report import ParityRow, RunReport, config_hash
from .serialize import load_model, save_model
from .synth import SynthSpec, synth_generate

WORKFLOW_NAMES = ("direct_dmaps_nn", "direct_dmaps_gbt", "altdmaps",
                  "yshaped", "pls_direct", "ihm_pls")

_TOP_KEYS = frozenset({"workflow", "seed", "data", "pretreatment", "split",
                       "dmaps", "regressor", "altdmaps", "yshaped", "pls",
                       "ihm", "out_dir"})
_MANIFEST_FILE = "manifest.json"
_HARD_MODEL_FILE = "hard_model.json"


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _check_keys(cfg: dict, allowed, where: str) -> None:
    unknown = sorted(set(cfg) - set(allowed))
    _require(not unknown, f"unknown keys in {where}: {unknown}")


def _spec_from(cls, cfg: dict, where: str, seed: Optional[int] = None):
    """Build a frozen spec dataclass from a JSON-style dict."""
    names = [f.name for f in dataclasses.fields(cls)]
    _check_keys(cfg, names, where)
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in cfg.items()}
    if seed is not None and "seed" in names:
        kw.setdefault("seed", seed)
    try:
        return cls(**kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


def _pretreatment_spec(cfg: dict) -> PretreatmentSpec:
    _check_keys(cfg, ("region", "baseline", "normalization", "exclusions"),
                "pretreatment")
    kw = dict(cfg)
    if isinstance(kw.get("region"), list):
        kw["region"] = tuple(kw["region"])
    if "exclusions" in kw:
        kw["exclusions"] = tuple(tuple(band) for band in kw["exclusions"])
    try:
        return PretreatmentSpec(**kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"pretreatment: {e}") from e


def _top_seed(config: dict) -> int:
    return int(config.get("seed", 0))


@dataclass(frozen=True)
class RunContext:
    """Loaded data plus the fixed split, pretreated per side."""

    raw: SpectraSet
    train: SpectraSet
    test: SpectraSet
    train_idx: np.ndarray
    test_idx: np.ndarray


def _prepare(config: dict) -> RunContext:
    _require(isinstance(config, dict), "config must be a mapping")
    _check_keys(config, _TOP_KEYS, "config")
    data = config.get("data")
    _require(isinstance(data, dict), "config needs a 'data' section")
    if "synth" in data:
        _check_keys(data, ("synth",), "data")
        spec = _spec_from(SynthSpec, data["synth"], "data.synth",
                          seed=_top_seed(config))
        ds, _ = synth_generate(spec)
    else:
        _check_keys(data, ("spectra", "sizes"), "data")
        _require(isinstance(data.get("spectra"), str),
                 "data.spectra must be a file path")
        ds = load_spectra(data["spectra"], data.get("sizes"))
    _require(ds.sizes is not None, "workflow needs size targets")

    split = config.get("split", {})
    _check_keys(split, ("test_fraction", "seed"), "split")
    frac = float(split.get("test_fraction", 0.25))
    _require(0.0 < frac < 1.0, "split.test_fraction must lie in (0, 1)")
    n_test = max(1, int(round(frac * ds.n_samples)))
    _require(ds.n_samples - n_test >= 4, "split leaves too few training rows")
    seed = int(split.get("seed", _top_seed(config)))
    train_raw, test_raw, train_idx, test_idx = train_test_split(ds, n_test, seed)

    pre = _pretreatment_spec(config.get("pretreatment", {}))
    return RunContext(raw=ds,
                      train=apply_pretreatment(train_raw, pre),
                      test=apply_pretreatment(test_raw, pre),
                      train_idx=train_idx, test_idx=test_idx)


def two_cluster_labels(values) -> np.ndarray:
    """Deterministic 1-D two-means: centers start at min and max, ties
    go to the lower cluster.  Returns 0/1 labels (0 = lower center)."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("no values to cluster")
    c0, c1 = float(v.min()), float(v.max())
    labels = np.zeros(v.size, dtype=int)
    if c0 == c1:
        return labels
    for _ in range(200):
        labels = (np.abs(v - c1) < np.abs(v - c0)).astype(int)
        m0, m1 = float(v[labels == 0].mean()), float(v[labels == 1].mean())
        if m0 == c0 and m1 == c1:
            break
        c0, c1 = m0, m1
    return labels


def _cluster_diag(ctx: RunContext) -> Dict[str, int]:
    labels = two_cluster_labels(ctx.raw.intensities.sum(axis=1))
    return {sid: int(l) for sid, l in zip(ctx.raw.sample_ids, labels)}


@dataclass(frozen=True)
class EmbeddingStage:
    dmap: DmapModel
    selection: EigenSelection
    indices: Tuple[int, ...]
    phi_train: np.ndarray
    phi_test: np.ndarray
    nystrom_train_mse: float


def _embed(config: dict, ctx: RunContext) -> EmbeddingStage:
    cfg = config.get("dmaps", {})
    _check_keys(cfg, ("epsilon", "density_normalize", "n_eig", "coords",
                      "llr_threshold"), "dmaps")
    n_train = ctx.train.n_samples
    n_eig = int(cfg.get("n_eig", min(10, n_train - 1)))
    eps = cfg.get("epsilon")
    params = _spec_from(KernelParams,
                        {"epsilon": eps,
                         "density_normalize": cfg.get("density_normalize", True)},
                        "dmaps")
    model = fit_dmaps(ctx.train.intensities, params, n_eig=n_eig)

    coords = cfg.get("coords", "llr")
    if coords == "all":
        indices = tuple(range(1, model.n_eig))
        selection = EigenSelection(indices=indices,
                                   residuals=np.ones(model.n_eig - 1))
    elif coords == "llr":
        _require(model.n_eig >= 3, "llr selection needs n_eig >= 3")
        llr = local_linear_residual(model.eigenvectors[:, 1:],
                                    threshold=float(cfg.get("llr_threshold", 0.5)))
        indices = tuple(i + 1 for i in llr.indices)
        selection = EigenSelection(indices=indices, residuals=llr.residuals)
    elif isinstance(coords, list):
        _require(len(coords) > 0, "dmaps.coords list is empty")
        indices = tuple(int(i) for i in coords)
        _require(len(set(indices)) == len(indices), "duplicate dmaps.coords")
        _require(all(1 <= i < model.n_eig for i in indices),
                 "dmaps.coords indices must lie in [1, n_eig)")
        selection = EigenSelection(indices=indices,
                                   residuals=np.ones(len(indices)))
    else:
        raise ConfigError(f"dmaps.coords must be 'llr', 'all' or a list, "
                          f"got {coords!r}")

    phi_train = model.eigenvectors[:, list(indices)]
    phi_test = nystrom_extend(model, ctx.test.intensities, indices)
    back = nystrom_extend(model, ctx.train.intensities, indices)
    mse = float(np.mean((back - phi_train) ** 2))
    return EmbeddingStage(dmap=model, selection=selection, indices=indices,
                          phi_train=phi_train, phi_test=phi_test,
                          nystrom_train_mse=mse)


def _head_fit(kind: str, cfg: dict, X: np.ndarray, y: np.ndarray, seed: int):
    """Fit a size (or coordinate) regressor; y may be 1-D or (n, k)."""
    if kind == "nn":
        return mlp_fit(X, y, _spec_from(MlpSpec, cfg, "regressor", seed=seed))
    if kind == "gbt":
        spec = _spec_from(GbtSpec, cfg, "regressor", seed=seed)
        Y = np.asarray(y, dtype=float)
        if Y.ndim == 2:
            return [gbt_fit(X, Y[:, j], spec) for j in range(Y.shape[1])]
        return gbt_fit(X, Y, spec)
    raise ConfigError(f"unknown regressor kind {kind!r}")


def _head_predict(model, X: np.ndarray) -> np.ndarray:
    if isinstance(model, MlpModel):
        return mlp_predict(model, X)
    if isinstance(model, GbtModel):
        return gbt_predict(model, X)
    if isinstance(model, GhModel):
        return gh_predict(model, X)
    if isinstance(model, list):
        return np.column_stack([gbt_predict(m, X) for m in model])
    raise TypeError(f"not a predictor: {type(model).__name__}")


def _assemble(config: dict, ctx: RunContext, preds_tr, preds_te,
              latent_count: int, diagnostics: dict,
              loss_history=None) -> RunReport:
    y_tr = ctx.train.sizes
    y_te = ctx.test.sizes
    parity = tuple(
        [ParityRow(sid, float(a), float(p), "train")
         for sid, a, p in zip(ctx.train.sample_ids, y_tr, preds_tr)]
        + [ParityRow(sid, float(a), float(p), "test")
           for sid, a, p in zip(ctx.test.sample_ids, y_te, preds_te)])
    return RunReport(workflow=config["workflow"],
                     config_hash=config_hash(config),
                     train_metrics=compute_metrics(preds_tr, y_tr),
                     test_metrics=compute_metrics(preds_te, y_te),
                     latent_count=int(latent_count),
                     parity=parity,
                     diagnostics=diagnostics,
                     loss_history=loss_history)


def _persist(config: dict, parts: Dict[str, object],
             extra: Optional[dict] = None) -> Optional[str]:
    """Save fitted models under out_dir/models plus a manifest; no-op
    without an out_dir.  Returns the models directory."""
    out_dir = config.get("out_dir")
    if not out_dir:
        return None
    base = os.path.join(os.fspath(out_dir), "models")
    os.makedirs(base, exist_ok=True)
    counts = {}
    for name, obj in parts.items():
        if isinstance(obj, list):
            counts[name] = len(obj)
            for i, m in enumerate(obj):
                save_model(os.path.join(base, name, str(i)), m)
        else:
            counts[name] = 1
            save_model(os.path.join(base, name), obj)
    manifest = {"workflow": config["workflow"],
                "config_hash": config_hash(config),
                "pretreatment": config.get("pretreatment", {}),
                "parts": counts}
    if extra:
        manifest.update(extra)
    with open(os.path.join(base, _MANIFEST_FILE), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return base


def workflow_direct(config: dict, _ctx: Optional[RunContext] = None) -> RunReport:
    """Size straight from the spectral embedding coordinates."""
    ctx = _ctx if _ctx is not None else _prepare(config)
    kind = {"direct_dmaps_nn": "nn", "direct_dmaps_gbt": "gbt"}[config["workflow"]]
    emb = _embed(config, ctx)
    head = _head_fit(kind, config.get("regressor", {}),
                     emb.phi_train, ctx.train.sizes, _top_seed(config))
    preds_tr = _head_predict(head, emb.phi_train)
    preds_te = _head_predict(head, emb.phi_test)
    diagnostics = {
        "dmap_epsilon": emb.dmap.epsilon,
        "nystrom_train_mse": emb.nystrom_train_mse,
        "selected_coordinates": list(emb.indices),
        "llr_residuals": emb.selection.residuals,
        "intensity_clusters": _cluster_diag(ctx),
    }
    report = _assemble(config, ctx, preds_tr, preds_te,
                       len(emb.indices), diagnostics)
    _persist(config,
             {"dmap": emb.dmap, "dmap_selection": emb.selection,
              "size_regressor": head},
             extra={"dmap_indices": list(emb.indices)})
    return report


@dataclass(frozen=True)
class AltOfflineModels:
    """Persisted outcome of the two offline steps."""

    dmap: DmapModel
    dmap_selection: EigenSelection
    dmap_indices: Tuple[int, ...]
    alt: AltDmapModel
    alt_selection: EigenSelection


_ALT_KEYS = ("n_eig", "n_alt_coords", "epsilon1", "epsilon2",
             "density_normalize", "llr_threshold", "gh_delta",
             "alt_regressor", "size_regressor",
             "alt_regressor_config", "size_regressor_config")


def workflow_altdmaps_offline(config: dict,
                              _ctx: Optional[RunContext] = None
                              ) -> AltOfflineModels:
    """Offline steps: embed the training spectra, then find the
    variable common to that embedding and the size readings."""
    ctx = _ctx if _ctx is not None else _prepare(config)
    emb = _embed(config, ctx)
    cfg = config.get("altdmaps", {})
    _check_keys(cfg, _ALT_KEYS, "altdmaps")
    n_train = ctx.train.n_samples
    n_eig = int(cfg.get("n_eig", min(10, n_train - 1)))
    dn = bool(cfg.get("density_normalize", True))
    p1 = KernelParams(epsilon=cfg.get("epsilon1"), density_normalize=dn)
    p2 = KernelParams(epsilon=cfg.get("epsilon2"), density_normalize=dn)
    sizes_col = np.asarray(ctx.train.sizes, dtype=float)[:, None]
    alt = fit_altdmaps(emb.phi_train, sizes_col, p1, p2, n_eig=n_eig)
    _require(alt.eigenvalues.size >= 3, "altdmaps.n_eig must be >= 3")
    llr = local_linear_residual(alt.eigenvectors[:, 1:],
                                threshold=float(cfg.get("llr_threshold", 0.5)))
    alt_selection = EigenSelection(indices=tuple(i + 1 for i in llr.indices),
                                   residuals=llr.residuals)
    models = AltOfflineModels(dmap=emb.dmap, dmap_selection=emb.selection,
                              dmap_indices=emb.indices, alt=alt,
                              alt_selection=alt_selection)
    _persist(config,
             {"dmap": emb.dmap, "dmap_selection": emb.selection,
              "altdmap": alt, "alt_selection": alt_selection},
             extra={"dmap_indices": list(emb.indices)})
    return models


def workflow_altdmaps_online(config: dict,
                             models: Optional[AltOfflineModels] = None,
                             _ctx: Optional[RunContext] = None) -> RunReport:
    """Online chain: Nystrom coordinates for new spectra, regress the
    common coordinates from them, then the size from the common ones."""
    ctx = _ctx if _ctx is not None else _prepare(config)
    if models is None:
        models = workflow_altdmaps_offline(config, _ctx=ctx)
    cfg = config.get("altdmaps", {})
    _check_keys(cfg, _ALT_KEYS, "altdmaps")
    seed = _top_seed(config)

    indices = models.dmap_indices
    phi_tr = models.dmap.eigenvectors[:, list(indices)]
    phi_te = nystrom_extend(models.dmap, ctx.test.intensities, indices)
    back = nystrom_extend(models.dmap, ctx.train.intensities, indices)
    nystrom_mse = float(np.mean((back - phi_tr) ** 2))

    n_alt_max = models.alt.eigenvalues.size - 1
    n_alt = int(cfg.get("n_alt_coords", min(6, n_alt_max)))
    _require(1 <= n_alt <= n_alt_max,
             f"altdmaps.n_alt_coords must lie in [1, {n_alt_max}]")
    alt_idx = tuple(range(1, n_alt + 1))
    psi_tr = alt_coordinates(models.alt, alt_idx)

    alt_kind = cfg.get("alt_regressor", "gh")
    if alt_kind == "gh":
        f_alt = gh_fit(phi_tr, psi_tr, params=KernelParams(),
                       delta=float(cfg.get("gh_delta", 1e-3)))
    elif alt_kind == "gbt":
        f_alt = _head_fit("gbt", cfg.get("alt_regressor_config", {}),
                          phi_tr, psi_tr, seed)
    else:
        raise ConfigError(f"altdmaps.alt_regressor must be 'gh' or 'gbt', "
                          f"got {alt_kind!r}")
    psi_hat_tr = _head_predict(f_alt, phi_tr)
    psi_hat_te = _head_predict(f_alt, phi_te)

    size_kind = cfg.get("size_regressor", "nn")
    _require(size_kind in ("nn", "gbt"),
             f"altdmaps.size_regressor must be 'nn' or 'gbt', got {size_kind!r}")
    f_size = _head_fit(size_kind, cfg.get("size_regressor_config", {}),
                       psi_tr, ctx.train.sizes, seed)
    preds_tr = _head_predict(f_size, psi_hat_tr)
    preds_te = _head_predict(f_size, psi_hat_te)

    y_tr = ctx.train.sizes
    diagnostics = {
        "dmap_epsilon": models.dmap.epsilon,
        "nystrom_train_mse": nystrom_mse,
        "selected_coordinates": list(indices),
        "alt_coordinates_used": list(alt_idx),
        "alt_selected_indices": list(models.alt_selection.indices),
        "alt_llr_residuals": models.alt_selection.residuals,
        "alt_eigenvalues": models.alt.eigenvalues,
        "altdmap_prediction_mse": float(np.mean((psi_hat_tr - psi_tr) ** 2)),
        "size_r2_actual_alt_train":
            compute_metrics(_head_predict(f_size, psi_tr), y_tr).r2,
        "size_r2_predicted_alt_train": compute_metrics(preds_tr, y_tr).r2,
        "intensity_clusters": _cluster_diag(ctx),
    }
    report = _assemble(config, ctx, preds_tr, preds_te, n_alt, diagnostics)
    _persist(config,
             {"dmap": models.dmap, "dmap_selection": models.dmap_selection,
              "altdmap": models.alt, "alt_selection": models.alt_selection,
              "alt_regressor": f_alt, "size_regressor": f_size},
             extra={"dmap_indices": list(indices),
                    "alt_indices": list(alt_idx)})
    return report


def workflow_yshaped(config: dict, _ctx: Optional[RunContext] = None) -> RunReport:
    """Embedding, then the conformal autoencoder whose first latent
    coordinate carries the size."""
    ctx = _ctx if _ctx is not None else _prepare(config)
    emb = _embed(config, ctx)
    spec = _spec_from(YShapedSpec, config.get("yshaped", {}), "yshaped",
                      seed=_top_seed(config))
    model, history = yae_fit(emb.phi_train, ctx.train.sizes, spec)
    preds_tr = predict_size(model, emb.phi_train)
    preds_te = predict_size(model, emb.phi_test)
    recon = decode(model, encode(model, emb.phi_train))
    rel_l2 = float(np.linalg.norm(recon - emb.phi_train)
                   / np.linalg.norm(emb.phi_train))
    diagnostics = {
        "dmap_epsilon": emb.dmap.epsilon,
        "nystrom_train_mse": emb.nystrom_train_mse,
        "selected_coordinates": list(emb.indices),
        "llr_residuals": emb.selection.residuals,
        "reconstruction_l2": rel_l2,
        "orthogonality": orthogonality_score(model, emb.phi_train),
        "intensity_clusters": _cluster_diag(ctx),
    }
    # one latent coordinate feeds the size head
    report = _assemble(config, ctx, preds_tr, preds_te, 1, diagnostics,
                       loss_history=tuple(history))
    _persist(config,
             {"dmap": emb.dmap, "dmap_selection": emb.selection, "yae": model},
             extra={"dmap_indices": list(emb.indices)})
    return report


def _ihm_features(dataset: SpectraSet, base: HardModel, mode: str,
                  position_bound: float, max_iterations: int):
    rows = []
    unconverged = 0
    sse_total = 0.0
    w = dataset.grid.values
    for i in range(dataset.n_samples):
        result = fit_hard_model(base, w, dataset.intensities[i], mode,
                                position_bound=position_bound,
                                max_iterations=max_iterations)
        rows.append(extract_parameters(result.model, mode))
        unconverged += 0 if result.converged else 1
        sse_total += result.sse
    return np.array(rows), unconverged, sse_total / dataset.n_samples


def workflow_pls(config: dict, _ctx: Optional[RunContext] = None) -> RunReport:
    """Latent-variable linear benchmark, optionally on peak-fit
    parameters instead of raw intensities."""
    ctx = _ctx if _ctx is not None else _prepare(config)
    use_ihm = config["workflow"] == "ihm_pls"
    cfg = config.get("pls", {})
    _check_keys(cfg, ("k_max", "folds", "seed", "zscore"), "pls")
    diagnostics: dict = {"intensity_clusters": _cluster_diag(ctx)}

    if use_ihm:
        icfg = config.get("ihm", {})
        _check_keys(icfg, ("model_json", "mode", "position_bound",
                           "max_iterations"), "ihm")
        _require(isinstance(icfg.get("model_json"), str),
                 "ihm.model_json must be a file path")
        base = load_hard_model(icfg["model_json"])
        mode = icfg.get("mode", "medium")
        bound = float(icfg.get("position_bound", 5.0))
        max_iter = int(icfg.get("max_iterations", 200))
        F_tr, unc_tr, sse_tr = _ihm_features(ctx.train, base, mode, bound,
                                             max_iter)
        F_te, unc_te, sse_te = _ihm_features(ctx.test, base, mode, bound,
                                             max_iter)
        diagnostics.update({"ihm_unconverged_train": unc_tr,
                            "ihm_unconverged_test": unc_te,
                            "ihm_mean_sse_train": sse_tr,
                            "ihm_mean_sse_test": sse_te})
    else:
        F_tr = ctx.train.intensities
        F_te = ctx.test.intensities

    try:
        scaler, Z_tr = fit_column_scaler(F_tr, bool(cfg.get("zscore", True)))
    except ValueError as e:
        raise NumericError(str(e)) from e
    Z_te = apply_column_scaler(scaler, F_te)
    diagnostics["kept_feature_columns"] = int(scaler.keep.sum())

    n_train = ctx.train.n_samples
    k_cap = min(n_train - 2, Z_tr.shape[1])
    k_max = int(cfg.get("k_max", min(10, k_cap)))
    _require(1 <= k_max <= k_cap, f"pls.k_max must lie in [1, {k_cap}]")
    folds = int(cfg.get("folds", 5))
    seed = int(cfg.get("seed", _top_seed(config)))
    y_tr = ctx.train.sizes
    k, cv_mse = pls_choose_components(Z_tr, y_tr, k_max, folds=folds, seed=seed)
    model = pls_fit(Z_tr, y_tr, k)
    preds_tr = pls_predict(model, Z_tr)
    preds_te = pls_predict(model, Z_te)
    diagnostics["pls_components"] = k
    diagnostics["pls_cv_mse"] = cv_mse

    report = _assemble(config, ctx, preds_tr, preds_te, k, diagnostics)
    models_dir = _persist(config, {"pls": model, "scaler": scaler},
                          extra=None if not use_ihm else
                          {"ihm": {"mode": mode, "position_bound": bound,
                                   "max_iterations": max_iter}})
    if models_dir and use_ihm:
        save_hard_model(os.path.join(models_dir, _HARD_MODEL_FILE), base)
    return report


def run_workflow(config: dict) -> RunReport:
    """Dispatch on config["workflow"]; see WORKFLOW_NAMES."""
    _require(isinstance(config, dict), "config must be a mapping")
    workflow = config.get("workflow")
    _require(workflow in WORKFLOW_NAMES,
             f"workflow must be one of {list(WORKFLOW_NAMES)}, got {workflow!r}")
    if workflow in ("direct_dmaps_nn", "direct_dmaps_gbt"):
        return workflow_direct(config)
    if workflow == "altdmaps":
        ctx = _prepare(config)
        models = workflow_altdmaps_offline(config, _ctx=ctx)
        return workflow_altdmaps_online(config, models, _ctx=ctx)
    if workflow == "yshaped":
        return workflow_yshaped(config)
    return workflow_pls(config)


@dataclass(frozen=True)
class Pipeline:
    """Reloaded models plus the manifest needed to predict new spectra."""

    manifest: dict
    parts: Dict[str, object]


def load_pipeline(models_dir) -> Pipeline:
    models_dir = os.fspath(models_dir)
    with open(os.path.join(models_dir, _MANIFEST_FILE), encoding="utf-8") as fh:
        manifest = json.load(fh)
    parts: Dict[str, object] = {}
    for name, count in manifest["parts"].items():
        if count == 1:
            parts[name] = load_model(os.path.join(models_dir, name))
        else:
            parts[name] = [load_model(os.path.join(models_dir, name, str(i)))
                           for i in range(count)]
    if "ihm" in manifest:
        parts["hard_model"] = load_hard_model(
            os.path.join(models_dir, _HARD_MODEL_FILE))
    return Pipeline(manifest=manifest, parts=parts)


def pipeline_predict(pipe: Pipeline, spectra: SpectraSet) -> np.ndarray:
    """Predict sizes for new spectra with a persisted workflow."""
    workflow = pipe.manifest["workflow"]
    pre = _pretreatment_spec(pipe.manifest.get("pretreatment", {}))
    ds = apply_pretreatment(spectra, pre)
    if workflow in ("direct_dmaps_nn", "direct_dmaps_gbt", "yshaped",
                    "altdmaps"):
        indices = tuple(pipe.manifest["dmap_indices"])
        phi = nystrom_extend(pipe.parts["dmap"], ds.intensities, indices)
        if workflow == "yshaped":
            return predict_size(pipe.parts["yae"], phi)
        if workflow == "altdmaps":
            psi = _head_predict(pipe.parts["alt_regressor"], phi)
            return _head_predict(pipe.parts["size_regressor"], psi)
        return _head_predict(pipe.parts["size_regressor"], phi)
    if workflow in ("pls_direct", "ihm_pls"):
        if workflow == "ihm_pls":
            icfg = pipe.manifest["ihm"]
            F = _ihm_features(ds, pipe.parts["hard_model"], icfg["mode"],
                              icfg["position_bound"],
                              icfg["max_iterations"])[0]
        else:
            F = ds.intensities
        Z = apply_column_scaler(pipe.parts["scaler"], F)
        return pls_predict(pipe.parts["pls"], Z)
    raise ConfigError(f"manifest names unknown workflow {workflow!r}")
