"""Model and report files: versioned JSON with base64-encoded arrays.

Arrays are serialized as little-endian 64-bit floats so a save/load round
trip reproduces every matrix bit-for-bit, which in turn makes reloaded
models predict identically to the originals. Files with a different
format version are rejected outright.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import asdict
from typing import Any, Optional, Union

import numpy as np

from .baselines import BaselineModel
from .datamodel import FeatureMatrix, FoldPlan, MultiModalDataset
from .errors import PersistenceError
from .evaluation import ConfusionMatrix, EvalReport, MetricSet
from .kernels import KernelParams, NptState
from .subspace import ProjectionMatrix, SubspaceModel, TrainConfig
from .svdd import DataDescription, HyperplaneDescription

FORMAT_VERSION = 1


def _encode_array(a: np.ndarray) -> dict[str, Any]:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {
        "shape": list(a.shape),
        "data": base64.b64encode(a.tobytes()).decode("ascii"),
    }


def _decode_array(obj: dict[str, Any]) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    a = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    return a.reshape([int(s) for s in obj["shape"]])


def dataset_digest(data: MultiModalDataset) -> str:
    """Stable content hash of the feature matrices and labels."""
    h = hashlib.sha256()
    for mod in data.modalities:
        h.update(np.ascontiguousarray(mod.values, dtype="<f8").tobytes())
    if data.labels is not None:
        h.update(np.ascontiguousarray(data.labels, dtype="<i8").tobytes())
    return h.hexdigest()


def _kernel_params_to_dict(kp: KernelParams) -> dict[str, Any]:
    return {
        "kind": kp.kind,
        "gamma": kp.gamma,
        "sigma": kp.sigma,
        "kappa": kp.kappa,
        "theta": kp.theta,
    }


def _kernel_params_from_dict(obj: dict[str, Any]) -> KernelParams:
    return KernelParams(
        kind=obj["kind"],
        gamma=float(obj["gamma"]),
        sigma=float(obj["sigma"]),
        kappa=None if obj["kappa"] is None else float(obj["kappa"]),
        theta=float(obj["theta"]),
    )


def config_to_dict(config: TrainConfig) -> dict[str, Any]:
    out = asdict(config)
    out["kernel_params"] = _kernel_params_to_dict(config.kernel_params)
    return out


def config_from_dict(obj: dict[str, Any]) -> TrainConfig:
    kp = _kernel_params_from_dict(obj["kernel_params"])
    return TrainConfig(
        d=int(obj["d"]),
        eta=float(obj["eta"]),
        beta=float(obj["beta"]),
        c_penalty=float(obj["c_penalty"]),
        max_iter=int(obj["max_iter"]),
        update_strategy=obj["update_strategy"],
        regularizer=obj["regularizer"],
        kernelized=bool(obj["kernelized"]),
        kernel_params=kp,
        decision_strategy=obj["decision_strategy"],
        model_kind=obj["model_kind"],
        nu=float(obj["nu"]),
        kkt_tol=float(obj["kkt_tol"]),
    )


def _npt_state_to_dict(state: NptState) -> dict[str, Any]:
    return {
        "train_kernel": _encode_array(state.train_kernel),
        "row_means": _encode_array(state.row_means),
        "grand_mean": state.grand_mean,
        "eigvecs": _encode_array(state.eigvecs),
        "eigvals": _encode_array(state.eigvals),
        "rank": state.rank,
        "embedded": _encode_array(state.embedded),
        "train_data": _encode_array(state.train_data.values),
        "params": _kernel_params_to_dict(state.params),
    }


def _npt_state_from_dict(obj: dict[str, Any]) -> NptState:
    return NptState(
        train_kernel=_decode_array(obj["train_kernel"]),
        row_means=_decode_array(obj["row_means"]),
        grand_mean=float(obj["grand_mean"]),
        eigvecs=_decode_array(obj["eigvecs"]),
        eigvals=_decode_array(obj["eigvals"]),
        rank=int(obj["rank"]),
        embedded=_decode_array(obj["embedded"]),
        train_data=FeatureMatrix(_decode_array(obj["train_data"])),
        params=_kernel_params_from_dict(obj["params"]),
    )


def _description_to_dict(
    desc: Union[DataDescription, HyperplaneDescription]
) -> dict[str, Any]:
    if isinstance(desc, DataDescription):
        return {
            "kind": "sphere",
            "alphas": _encode_array(desc.alphas),
            "c_penalty": desc.c_penalty,
            "radius_sq": desc.radius_sq,
            "train_points": _encode_array(desc.train_points),
        }
    return {
        "kind": "hyperplane",
        "alphas": _encode_array(desc.alphas),
        "rho": desc.rho,
        "nu": desc.nu,
        "train_points": _encode_array(desc.train_points),
    }


def _description_from_dict(
    obj: dict[str, Any]
) -> Union[DataDescription, HyperplaneDescription]:
    if obj["kind"] == "sphere":
        return DataDescription(
            alphas=_decode_array(obj["alphas"]),
            c_penalty=float(obj["c_penalty"]),
            radius_sq=float(obj["radius_sq"]),
            train_points=_decode_array(obj["train_points"]),
        )
    if obj["kind"] == "hyperplane":
        return HyperplaneDescription(
            alphas=_decode_array(obj["alphas"]),
            rho=float(obj["rho"]),
            nu=float(obj["nu"]),
            train_points=_decode_array(obj["train_points"]),
        )
    raise PersistenceError(f"unknown description kind {obj['kind']!r}")


def _scaler_to_jsonable(scaler) -> Optional[list]:
    if scaler is None:
        return None
    return [
        {"mean": _encode_array(mean), "std": _encode_array(std)}
        for mean, std in scaler
    ]


def _scaler_from_jsonable(obj) -> Optional[list]:
    if obj is None:
        return None
    return [(_decode_array(s["mean"]), _decode_array(s["std"])) for s in obj]


def model_to_dict(
    model: Union[SubspaceModel, BaselineModel],
    provenance: Optional[dict[str, Any]] = None,
) -> dict[str, Any]:
    common = {
        "format_version": FORMAT_VERSION,
        "tool_version": _tool_version(),
        "config": config_to_dict(model.config),
        "description": _description_to_dict(model.description),
        "scaler": _scaler_to_jsonable(model.scaler),
        "provenance": provenance or {},
        "warning": model.warning,
    }
    if isinstance(model, SubspaceModel):
        common.update(
            {
                "model_class": "subspace",
                "projections": [_encode_array(p.q) for p in model.projections],
                "modality_index_map": [list(t) for t in model.modality_index_map],
                "npt_states": (
                    None
                    if model.npt_states is None
                    else [_npt_state_to_dict(s) for s in model.npt_states]
                ),
                "ortho_errors": list(model.ortho_errors),
            }
        )
    else:
        common.update(
            {
                "model_class": "baseline",
                "baseline_kind": model.kind,
                "n_modalities": model.n_modalities,
                "npt_state": (
                    None
                    if model.npt_state is None
                    else _npt_state_to_dict(model.npt_state)
                ),
            }
        )
    return common


def model_from_dict(obj: dict[str, Any]) -> Union[SubspaceModel, BaselineModel]:
    version = obj.get("format_version")
    if version != FORMAT_VERSION:
        raise PersistenceError(
            f"unsupported model format version {version!r}; expected {FORMAT_VERSION}"
        )
    config = config_from_dict(obj["config"])
    description = _description_from_dict(obj["description"])
    scaler = _scaler_from_jsonable(obj.get("scaler"))
    if obj["model_class"] == "subspace":
        model: Union[SubspaceModel, BaselineModel] = SubspaceModel(
            projections=[
                ProjectionMatrix(_decode_array(p)) for p in obj["projections"]
            ],
            description=description,
            config=config,
            modality_index_map=[tuple(t) for t in obj["modality_index_map"]],
            npt_states=(
                None
                if obj["npt_states"] is None
                else [_npt_state_from_dict(s) for s in obj["npt_states"]]
            ),
            scaler=scaler,
            ortho_errors=[float(e) for e in obj.get("ortho_errors", [])],
            warning=obj.get("warning"),
        )
        return model
    if obj["model_class"] == "baseline":
        return BaselineModel(
            kind=obj["baseline_kind"],
            description=description,
            config=config,
            npt_state=(
                None
                if obj["npt_state"] is None
                else _npt_state_from_dict(obj["npt_state"])
            ),
            scaler=scaler,
            n_modalities=int(obj["n_modalities"]),
            warning=obj.get("warning"),
        )
    raise PersistenceError(f"unknown model class {obj['model_class']!r}")


def _dump_json(obj: dict[str, Any]) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def save_model(
    model: Union[SubspaceModel, BaselineModel],
    path: str,
    provenance: Optional[dict[str, Any]] = None,
) -> None:
    with open(path, "w") as fh:
        fh.write(_dump_json(model_to_dict(model, provenance)))


def load_model(path: str) -> Union[SubspaceModel, BaselineModel]:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise PersistenceError(f"cannot read model file {path}: {exc}") from exc
    return model_from_dict(obj)


# ---------------------------------------------------------------------------
# Evaluation report files
# ---------------------------------------------------------------------------

def report_to_dict(report: EvalReport) -> dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "tool_version": _tool_version(),
        "k": report.k,
        "seed": report.seed,
        "config": config_to_dict(report.config),
        "fold_confusions": [
            {"tp": c.tp, "fn": c.fn, "fp": c.fp, "tn": c.tn}
            for c in report.fold_confusions
        ],
        "fold_metrics": [m.as_dict() for m in report.fold_metrics],
        "mean_metrics": report.mean_metrics.as_dict(),
        "pooled_confusion": {
            "tp": report.pooled_confusion.tp,
            "fn": report.pooled_confusion.fn,
            "fp": report.pooled_confusion.fp,
            "tn": report.pooled_confusion.tn,
        },
        "pooled_metrics": report.pooled_metrics.as_dict(),
        "fold_assignment": [int(f) for f in report.fold_plan.assignment],
        "normalize": report.normalize,
        "max_ortho_error": report.max_ortho_error,
        "fold_configs": (
            None
            if report.fold_configs is None
            else [config_to_dict(c) for c in report.fold_configs]
        ),
        "selection": report.selection,
    }


def report_from_dict(obj: dict[str, Any]) -> EvalReport:
    version = obj.get("format_version")
    if version != FORMAT_VERSION:
        raise PersistenceError(
            f"unsupported report format version {version!r}; expected {FORMAT_VERSION}"
        )
    fold_confusions = [
        ConfusionMatrix(c["tp"], c["fn"], c["fp"], c["tn"])
        for c in obj["fold_confusions"]
    ]
    fold_metrics = [MetricSet(**m) for m in obj["fold_metrics"]]
    pooled = ConfusionMatrix(**obj["pooled_confusion"])
    return EvalReport(
        k=int(obj["k"]),
        seed=int(obj["seed"]),
        config=config_from_dict(obj["config"]),
        fold_metrics=fold_metrics,
        fold_confusions=fold_confusions,
        mean_metrics=MetricSet(**obj["mean_metrics"]),
        pooled_confusion=pooled,
        pooled_metrics=MetricSet(**obj["pooled_metrics"]),
        fold_plan=FoldPlan(
            k=int(obj["k"]),
            assignment=np.array(obj["fold_assignment"], dtype=np.int64),
            seed=int(obj["seed"]),
        ),
        normalize=bool(obj.get("normalize", False)),
        max_ortho_error=obj.get("max_ortho_error"),
        fold_configs=(
            None
            if obj.get("fold_configs") is None
            else [config_from_dict(c) for c in obj["fold_configs"]]
        ),
        selection=obj.get("selection"),
    )


def save_report(report: EvalReport, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(_dump_json(report_to_dict(report)))


def load_report(path: str) -> EvalReport:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise PersistenceError(f"cannot read report file {path}: {exc}") from exc
    return report_from_dict(obj)


def _tool_version() -> str:
    from . import __version__

    return __version__
