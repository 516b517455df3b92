#!/usr/bin/env python3
"""
Model and trajectory files (numpy .npz containers)
"""

import logging
from pathlib import Path

import numpy as np

from .errors import ContractError
from .nn import Activation, Arch, Layer, Model, Trajectory


logger = logging.getLogger(__name__)

MODEL_FILE = "model.npz"
TRAJECTORY_FILE = "trajectory.npz"
FORMAT_VERSION = 1


def save_model(model: Model, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {
        "format_version": np.array(FORMAT_VERSION),
        "arch": np.array(model.arch.value),
        "activations": np.array([layer.activation.value for layer in model.layers]),
    }
    for index, layer in enumerate(model.layers):
        arrays[f"weights_{index}"] = layer.weights
        if layer.bias is not None:
            arrays[f"bias_{index}"] = layer.bias
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    logger.debug("model saved to %s", path)
    return path


def _open(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ContractError(f"{path} does not exist")
    with np.load(path, allow_pickle=False) as data:
        contents = {key: data[key] for key in data.files}
    version = int(contents.get("format_version", -1))
    if version != FORMAT_VERSION:
        raise ContractError(f"{path}: unsupported format version {version}")
    return contents


def load_model(path) -> Model:
    data = _open(path)
    activations = [Activation(str(value)) for value in data["activations"]]
    layers = []
    for index, activation in enumerate(activations):
        bias = data.get(f"bias_{index}")
        layers.append(Layer(np.array(data[f"weights_{index}"]), None if bias is None else np.array(bias), activation))
    return Model(Arch(str(data["arch"])), tuple(layers))


def save_trajectory(trajectory: Trajectory, path) -> Path:
    """Persist everything the bound evaluators need (not the snapshots)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {
        "format_version": np.array(FORMAT_VERSION),
        "eta": np.array(trajectory.eta),
        "epochs": np.array(trajectory.epochs),
        "seed": np.array(trajectory.seed),
        "per_epoch_norms": trajectory.per_epoch_norms,
        "loss_curve": trajectory.loss_curve,
        "grad_norms": trajectory.grad_norms,
        "gradient_ratios": trajectory.gradient_ratios,
        "converged": np.array(trajectory.converged),
    }
    if trajectory.wstar_norms is not None:
        arrays["wstar_norms"] = np.array(trajectory.wstar_norms)
        arrays["wstar_epoch"] = np.array(trajectory.wstar_epoch)
    if trajectory.smoothness_estimate is not None:
        arrays["smoothness_estimate"] = np.array(trajectory.smoothness_estimate)
    if trajectory.final_model is not None:
        arrays["arch"] = np.array(trajectory.final_model.arch.value)
        arrays["shapes"] = np.array(trajectory.final_model.shapes, dtype=np.int64)
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    return path


def load_trajectory(path) -> Trajectory:
    """Load a trajectory; ``arch`` and ``shapes`` are exposed via trajectory_meta()"""
    data = _open(path)
    wstar = data.get("wstar_norms")
    smoothness = data.get("smoothness_estimate")
    return Trajectory(
        eta=float(data["eta"]),
        epochs=int(data["epochs"]),
        per_epoch_norms=np.array(data["per_epoch_norms"]),
        loss_curve=np.array(data["loss_curve"]),
        grad_norms=np.array(data["grad_norms"]),
        gradient_ratios=np.array(data["gradient_ratios"]),
        final_params=[],
        seed=int(data["seed"]),
        wstar_norms=None if wstar is None else [float(v) for v in wstar],
        wstar_epoch=None if wstar is None else int(data["wstar_epoch"]),
        converged=bool(data["converged"]),
        smoothness_estimate=None if smoothness is None else float(smoothness),
    )


def trajectory_meta(path) -> dict:
    data = _open(path)
    meta = {}
    if "arch" in data:
        meta["arch"] = Arch(str(data["arch"]))
        meta["shapes"] = [tuple(int(v) for v in row) for row in data["shapes"]]
    return meta
