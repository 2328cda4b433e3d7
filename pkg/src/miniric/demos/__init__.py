"""Reference xApps shipped with miniric, plus their descriptor and schema files.

Each demo lives in ``xapps/<name>/`` as ``config-file.json`` (descriptor)
and, when it declares controls, ``schema.json``. The images they name are
mapped to in-process factories by :func:`register_demo_images`.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from . import a1_consumer, example_xapp, kpm_monitor, pingpong

DEMO_ROOT = Path(__file__).resolve().parent / "xapps"
DEMO_REGISTRY = "localhost:5001"
DEMOS = ("example_xapp", "kpm_monitor", "a1_consumer", "ping", "pong")


def descriptor_path(name: str) -> Path:
    path = DEMO_ROOT / name / "config-file.json"
    if not path.exists():
        raise FileNotFoundError(f"no demo descriptor for {name!r}")
    return path


def schema_path(name: str) -> Optional[Path]:
    path = DEMO_ROOT / name / "schema.json"
    return path if path.exists() else None


def register_demo_images(catalog) -> None:
    """Make every image referenced by the demo descriptors pullable."""
    for tag in ("1.0.0", "1.1.0"):
        catalog.register("example.registry.com", "example_image_1", tag, example_xapp.create)
        catalog.register("example.registry.com", "example_image_2", tag, example_xapp.create)
        catalog.register(DEMO_REGISTRY, "kpm_monitor", tag, kpm_monitor.create)
        catalog.register(DEMO_REGISTRY, "a1_consumer", tag, a1_consumer.create)
        catalog.register(DEMO_REGISTRY, "ping", tag, pingpong.create_ping)
        catalog.register(DEMO_REGISTRY, "pong", tag, pingpong.create_pong)
