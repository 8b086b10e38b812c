"""Asynchronous multi-robot autoscanning: simulator, task generators and assignment solver."""
import logging

from .config import RunConfig, load_config
from .scene import SceneModel, load_scene

logging.getLogger(__name__).addHandler(logging.NullHandler())

__version__ = "0.1.0"
__all__ = ["RunConfig", "SceneModel", "load_config", "load_scene", "run"]


def run(scene, config=None):
    """Simulate one mission on a scene (object, path or bundled name)."""
    from .simulator import run as _run
    if not isinstance(scene, SceneModel):
        scene = load_scene(scene)
    return _run(scene, config or RunConfig())
