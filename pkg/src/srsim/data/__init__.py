"""Bundled fixture assets: gripper model and scene configurations."""

from importlib.resources import files


def data_path(name: str) -> str:
    """Filesystem path of a bundled asset, e.g. data_path('pj_gripper.urdf')."""
    return str(files(__package__).joinpath(name))
