import numpy as np
import pytest

from vesselmode.geometry import build_boundary, mesh_domain
from vesselmode.wall_model import WallMaterial

DISK = {"shape": "circle", "radius": 1.0}
ELLIPSE = {"shape": "ellipse", "a": 2.0, "b": 1.0}


@pytest.fixture(scope="session")
def disk_curve():
    return build_boundary(DISK, 256)


@pytest.fixture(scope="session")
def ellipse_curve():
    return build_boundary(ELLIPSE, 256)


@pytest.fixture(scope="session")
def disk_mesh_fine(disk_curve):
    return mesh_domain(disk_curve, 0.05)


@pytest.fixture(scope="session")
def disk_mesh(disk_curve):
    return mesh_domain(disk_curve, 0.1)


@pytest.fixture(scope="session")
def disk_mesh_coarse(disk_curve):
    return mesh_domain(disk_curve, 0.25)


@pytest.fixture(scope="session")
def ellipse_mesh_coarse(ellipse_curve):
    return mesh_domain(ellipse_curve, 0.25)


@pytest.fixture(scope="session")
def default_material():
    return WallMaterial.constant(np.eye(3), 1.0, 1.0, 1.0, 1.0)


@pytest.fixture(params=["circle", "ellipse"])
def geometry(request, disk_curve, ellipse_curve, disk_mesh_coarse, ellipse_mesh_coarse):
    if request.param == "circle":
        return disk_curve, disk_mesh_coarse
    return ellipse_curve, ellipse_mesh_coarse
