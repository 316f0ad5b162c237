"""Class labels and the on-disk dataset manifest.

A dataset is a directory with one folder per class, `root/<class>/*.png`
(jpg/jpeg/bmp also accepted). The default two-class layout binds folder
"non-glaucoma" to label 0 and "glaucoma" to label 1; an explicit class
table can override the mapping.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

from .errors import ContractError, EmptyDatasetError
from .fileio import read_json, write_json

#: folder-name -> integer label binding for the two-class fundus layout
DEFAULT_CLASSES: tuple[tuple[str, int], ...] = (("non-glaucoma", 0), ("glaucoma", 1))

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


@dataclass(frozen=True)
class ClassLabel:
    """An integer class label with its display name."""

    value: int
    name: str

    def __post_init__(self):
        if self.value < 0:
            raise ContractError(f"class label must be non-negative, got {self.value}")
        if not self.name:
            raise ContractError("class display name must be non-empty")


@dataclass(frozen=True)
class DatasetManifest:
    """Every image under a class-per-folder tree, with its label."""

    root: str
    classes: tuple[tuple[str, int], ...]
    entries: tuple[tuple[str, int], ...]

    def __post_init__(self):
        labels = sorted(label for _, label in self.classes)
        if labels != list(range(len(labels))):
            raise ContractError(f"class labels must be 0..{len(labels) - 1}, got {labels}")
        known = {label for _, label in self.classes}
        for path, label in self.entries:
            if label not in known:
                raise ContractError(f"entry {path!r} has unknown label {label}")

    @property
    def total(self) -> int:
        return len(self.entries)

    def class_label(self, value: int) -> ClassLabel:
        for name, label in self.classes:
            if label == value:
                return ClassLabel(label, name)
        raise ContractError(f"no class with label {value}")

    def per_class_counts(self) -> dict[str, int]:
        counts = {name: 0 for name, _ in self.classes}
        by_label = {label: name for name, label in self.classes}
        for _, label in self.entries:
            counts[by_label[label]] += 1
        return counts

    def to_json_dict(self) -> dict:
        return {
            "root": self.root,
            "classes": [[name, label] for name, label in self.classes],
            "entries": [[path, label] for path, label in self.entries],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "DatasetManifest":
        return cls(
            root=obj["root"],
            classes=tuple((str(n), int(v)) for n, v in obj["classes"]),
            entries=tuple((str(p), int(v)) for p, v in obj["entries"]),
        )

    def save(self, path) -> None:
        write_json(path, self.to_json_dict())

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        return cls.from_json_dict(read_json(path))


def scan_dataset(root: str | Path, classes: tuple[tuple[str, int], ...] = DEFAULT_CLASSES) -> DatasetManifest:
    """Walk a class-per-folder tree into a manifest with deterministic order.

    Entries are sorted lexicographically by relative path. Subdirectories
    that are not in the class table produce a warning and are excluded.
    Raises EmptyDatasetError when no image is found at all.
    """
    root = Path(root)
    if not root.is_dir():
        raise ContractError(f"dataset root is not a directory: {root}")
    class_names = {name for name, _ in classes}
    for name in class_names:
        if not (root / name).is_dir():
            raise ContractError(f"missing class folder {name!r} under {root}")
    for child in sorted(p.name for p in root.iterdir() if p.is_dir()):
        if child not in class_names:
            warnings.warn(f"ignoring unknown subdirectory {child!r} under {root}", stacklevel=2)

    entries: list[tuple[str, int]] = []
    for name, label in classes:
        folder = root / name
        for file in folder.rglob("*"):
            if file.is_file() and file.suffix.lower() in _IMAGE_SUFFIXES:
                entries.append((file.relative_to(root).as_posix(), label))
    entries.sort(key=lambda item: item[0])

    if not entries:
        counts = ", ".join(f"{name}: 0" for name, _ in classes)
        raise EmptyDatasetError(f"no images found under {root} ({counts})")
    return DatasetManifest(root=str(root), classes=tuple(classes), entries=tuple(entries))
