"""Versioned model file: architecture, flat parameter arrays, transform record.

The format is self-describing JSON so saved models can be re-evaluated on
new CSV data without the original run context.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from .conv import CnnArchitecture, ConvLayerSpec
from .data import TransformRecord
from .errors import DataError
from .nn import ArchitectureSpec, LayerSpec, TrainedModel

FORMAT_NAME = "archsearch-model"
FORMAT_VERSION = 1


def _arch_to_dict(arch) -> dict:
    if isinstance(arch, CnnArchitecture):
        return {
            "family": "cnn",
            "input_shape": list(arch.input_shape),
            "output_dim": arch.output_dim,
            "task": arch.task,
            "conv_layers": [
                {
                    "channels": l.channels,
                    "kernel_size": l.kernel_size,
                    "pooling": l.pooling,
                    "dropout_rate": l.dropout_rate,
                    "activation": l.activation,
                }
                for l in arch.conv_layers
            ],
        }
    return {
        "family": "mlp",
        "input_dim": arch.input_dim,
        "output_dim": arch.output_dim,
        "task": arch.task,
        "hidden": [{"width": l.width, "activation": l.activation} for l in arch.hidden],
    }


def _arch_from_dict(d: dict):
    if d["family"] == "cnn":
        return CnnArchitecture(
            input_shape=tuple(d["input_shape"]),
            conv_layers=tuple(
                ConvLayerSpec(
                    channels=l["channels"],
                    kernel_size=l["kernel_size"],
                    pooling=l["pooling"],
                    dropout_rate=l["dropout_rate"],
                    activation=l["activation"],
                )
                for l in d["conv_layers"]
            ),
            output_dim=d["output_dim"],
            task=d["task"],
        )
    return ArchitectureSpec(
        input_dim=d["input_dim"],
        output_dim=d["output_dim"],
        hidden=tuple(LayerSpec(l["width"], l["activation"]) for l in d["hidden"]),
        task=d["task"],
    )


def _record_to_dict(record: Optional[TransformRecord]) -> Optional[dict]:
    if record is None:
        return None
    out = {
        "feature_mean": record.feature_mean.tolist(),
        "feature_scale": record.feature_scale.tolist(),
    }
    if record.target_mean is not None:
        out["target_mean"] = record.target_mean.tolist()
        out["target_scale"] = record.target_scale.tolist()
    return out


def _record_from_dict(d: Optional[dict]) -> Optional[TransformRecord]:
    if d is None:
        return None
    return TransformRecord(
        feature_mean=np.array(d["feature_mean"], dtype=np.float64),
        feature_scale=np.array(d["feature_scale"], dtype=np.float64),
        target_mean=np.array(d["target_mean"], dtype=np.float64) if "target_mean" in d else None,
        target_scale=np.array(d["target_scale"], dtype=np.float64) if "target_scale" in d else None,
    )


def save_model(
    path,
    model: TrainedModel,
    record: Optional[TransformRecord] = None,
    feature_names=(),
    target_names=(),
    class_names=(),
    extra: Optional[dict] = None,
) -> None:
    payload = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "architecture": _arch_to_dict(model.arch),
        "params": [
            {"arrays": [{"shape": list(a.shape), "data": a.ravel().tolist()} for a in layer]}
            for layer in model.params
        ],
        "val_score": model.val_score,
        "stopped_epoch": model.stopped_epoch,
        "transform": _record_to_dict(record),
        "feature_names": list(feature_names),
        "target_names": list(target_names),
        "class_names": list(class_names),
    }
    if extra:
        payload["extra"] = extra
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_model(path):
    """Returns (TrainedModel, TransformRecord or None, metadata dict)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such model file: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a model file ({exc})") from None
    if payload.get("format") != FORMAT_NAME:
        raise DataError(f"{path}: unexpected format {payload.get('format')!r}")
    if payload.get("version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported version {payload.get('version')!r}")
    arch = _arch_from_dict(payload["architecture"])
    params = [
        tuple(
            np.array(a["data"], dtype=np.float64).reshape(a["shape"])
            for a in layer["arrays"]
        )
        for layer in payload["params"]
    ]
    model = TrainedModel(
        arch=arch,
        params=params,
        history=[],
        stopped_epoch=payload.get("stopped_epoch", 0),
        best_epoch=0,
        val_score=payload.get("val_score", float("nan")),
    )
    meta = {
        "feature_names": tuple(payload.get("feature_names", ())),
        "target_names": tuple(payload.get("target_names", ())),
        "class_names": tuple(payload.get("class_names", ())),
        "extra": payload.get("extra", {}),
    }
    return model, _record_from_dict(payload.get("transform")), meta
