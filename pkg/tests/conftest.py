import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import meshgen  # noqa: E402
from meshroi import build_adjacency, build_bvh, parse_obj  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


class Scene:
    """Mesh plus everything a gesture needs, with the OBJ on disk for the CLI."""

    def __init__(self, obj_bytes: bytes, path: Path, camera):
        path.write_bytes(obj_bytes)
        self.path = path
        self.mesh = parse_obj(obj_bytes)
        self.bvh = build_bvh(self.mesh)
        self.adjacency = build_adjacency(self.mesh)
        self.camera = camera


@pytest.fixture(scope="session")
def scene_dir(tmp_path_factory) -> Path:
    return tmp_path_factory.mktemp("scenes")


@pytest.fixture(scope="session")
def grid100(scene_dir) -> Scene:
    """Head-on 100x100 grid plane, 20000 triangle faces, 800x800 viewport."""
    return Scene(
        meshgen.grid_plane_obj(100),
        scene_dir / "grid100.obj",
        meshgen.head_on_camera(extent=1.0, viewport=800, distance=2.0),
    )


@pytest.fixture(scope="session")
def two_planes(scene_dir) -> Scene:
    """Two coaxial parallel 10x10 planes; the near one fully occludes the far one."""
    return Scene(
        meshgen.two_planes_obj(10),
        scene_dir / "two_planes.obj",
        meshgen.head_on_camera(extent=1.0, viewport=400, distance=2.0),
    )
