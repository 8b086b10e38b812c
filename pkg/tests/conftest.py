import pytest
from hypothesis import settings

settings.register_profile("ci", deadline=None, derandomize=True, print_blob=True)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def studio():
    from autoscan.scene import load_scene
    return load_scene("studio_s")
