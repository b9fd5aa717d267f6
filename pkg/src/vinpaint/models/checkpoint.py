"""Checkpoint archive: named parameter arrays plus a config record, in one zip.

Layout inside the archive::

    config.json                 model config, step, optional extra record
    params/<state-dict-key>.npy model parameters (shared alignment stored once)
    optim/meta.json             Adam param groups and state keys (if present)
    optim/<pid>/<key>.npy       Adam state arrays per parameter id
    rng/torch.npy               torch RNG state at save time

Entries are written sorted with fixed timestamps, so saving the same state
twice produces byte-identical files and save -> load -> save round-trips.
"""

import io
import json
import zipfile
from dataclasses import dataclass

import numpy as np
import torch

from .model import InpaintingModel, ModelConfig

FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass
class CheckpointBundle:
    """Everything needed to resume training or run inference."""

    config: ModelConfig
    state: dict
    step: int = 0
    optim_state: dict | None = None
    torch_rng: np.ndarray | None = None
    extra: dict | None = None

    def build_model(self):
        model = InpaintingModel(self.config)
        tensors = {k: torch.from_numpy(v.copy()) for k, v in self.state.items()}
        model.load_state_dict(tensors)
        return model


def _write_entry(zf, name, data):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o600 << 16
    zf.writestr(info, data)


def _npy_bytes(array):
    arr = np.asarray(array)
    if not arr.flags["C_CONTIGUOUS"]:
        arr = arr.copy(order="C")  # ascontiguousarray would promote 0-d to 1-d
    buf = io.BytesIO()
    np.lib.format.write_array(buf, arr, allow_pickle=False)
    return buf.getvalue()


def save_checkpoint(path, model, optimizer=None, step=0, extra=None):
    """Serialize model (and optionally Adam) state to a deterministic archive."""
    entries = {}
    config = {
        "format_version": FORMAT_VERSION,
        "model": model.config.to_dict(),
        "step": int(step),
        "extra": extra,
    }
    entries["config.json"] = json.dumps(config, sort_keys=True, indent=1).encode()
    for key, tensor in model.state_dict().items():
        entries[f"params/{key}.npy"] = _npy_bytes(tensor.detach().cpu().numpy())
    if optimizer is not None:
        osd = optimizer.state_dict()
        meta = {"param_groups": osd["param_groups"], "state_keys": {}}
        for pid, st in osd["state"].items():
            meta["state_keys"][str(pid)] = sorted(st.keys())
            for key, val in st.items():
                arr = val.detach().cpu().numpy() if torch.is_tensor(val) else np.asarray(val)
                entries[f"optim/{pid}/{key}.npy"] = _npy_bytes(arr)
        entries["optim/meta.json"] = json.dumps(meta, sort_keys=True).encode()
    entries["rng/torch.npy"] = _npy_bytes(torch.get_rng_state().numpy())
    with zipfile.ZipFile(path, "w") as zf:
        for name in sorted(entries):
            _write_entry(zf, name, entries[name])


def load_checkpoint(path):
    """Read a checkpoint archive back into a :class:`CheckpointBundle`."""
    with zipfile.ZipFile(path, "r") as zf:
        names = set(zf.namelist())
        config = json.loads(zf.read("config.json"))
        if config.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format: {config.get('format_version')}")
        state = {}
        for name in names:
            if name.startswith("params/") and name.endswith(".npy"):
                key = name[len("params/") : -len(".npy")]
                state[key] = np.lib.format.read_array(io.BytesIO(zf.read(name)))
        optim_state = None
        if "optim/meta.json" in names:
            meta = json.loads(zf.read("optim/meta.json"))
            optim_state = {"param_groups": meta["param_groups"], "state": {}}
            for pid, keys in meta["state_keys"].items():
                st = {}
                for key in keys:
                    arr = np.lib.format.read_array(io.BytesIO(zf.read(f"optim/{pid}/{key}.npy")))
                    st[key] = arr
                optim_state["state"][int(pid)] = st
        torch_rng = None
        if "rng/torch.npy" in names:
            torch_rng = np.lib.format.read_array(io.BytesIO(zf.read("rng/torch.npy")))
    return CheckpointBundle(
        config=ModelConfig(**config["model"]),
        state=state,
        step=config["step"],
        optim_state=optim_state,
        torch_rng=torch_rng,
        extra=config.get("extra"),
    )


def restore_optimizer(optimizer, optim_state):
    """Load a deserialized Adam state dict, rebuilding tensors where needed."""
    groups = []
    for group in optim_state["param_groups"]:
        group = dict(group)
        if isinstance(group.get("betas"), list):
            group["betas"] = tuple(group["betas"])  # JSON has no tuples
        groups.append(group)
    state = {}
    for pid, st in optim_state["state"].items():
        rebuilt = {}
        for key, arr in st.items():
            t = torch.from_numpy(np.asarray(arr).copy())
            rebuilt[key] = t.reshape(()) if t.ndim == 0 else t
        state[pid] = rebuilt
    optimizer.load_state_dict({"param_groups": groups, "state": state})
