"""Generate the coarse sample meshes used by the smoke runs.

Requires the `gmsh` Python package. Writes gmsh v2.2 ASCII files into
`meshes/` with named physical groups for the boundary surfaces and a
`domain` volume group.

    python3 scripts/gen_sample_meshes.py [--size-factor 1.0]
"""

import argparse
import math
from pathlib import Path

import gmsh

OUT = Path(__file__).resolve().parent.parent / "meshes"


def boundary_groups(classify):
    """Assign every boundary surface to a physical group named by `classify`."""
    groups = {}
    for dim, tag in gmsh.model.getBoundary(gmsh.model.getEntities(3), oriented=False):
        x, y, z = gmsh.model.occ.getCenterOfMass(dim, tag)
        groups.setdefault(classify(x, y, z), []).append(tag)
    for name, tags in sorted(groups.items()):
        gmsh.model.setPhysicalName(2, gmsh.model.addPhysicalGroup(2, tags), name)
    vols = [t for _, t in gmsh.model.getEntities(3)]
    gmsh.model.setPhysicalName(3, gmsh.model.addPhysicalGroup(3, vols), "domain")


def write(name, size):
    gmsh.option.setNumber("Mesh.MeshSizeMax", size)
    gmsh.option.setNumber("Mesh.MeshSizeMin", size / 3)
    gmsh.option.setNumber("Mesh.Algorithm3D", 1)
    gmsh.model.mesh.generate(3)
    gmsh.model.mesh.optimize("Netgen")
    gmsh.option.setNumber("Mesh.MshFileVersion", 2.2)
    gmsh.option.setNumber("Mesh.Binary", 0)
    OUT.mkdir(exist_ok=True)
    path = OUT / f"{name}.msh"
    gmsh.write(str(path))
    n = len(gmsh.model.mesh.getElementsByType(4)[0])
    print(f"{path.name}: {n} tetrahedra")


def block(f):
    gmsh.model.add("block")
    occ = gmsh.model.occ
    box = occ.addBox(-1, -1, -1, 2, 2, 2)
    patch = occ.addRectangle(-0.5, -0.5, 1, 1, 1)
    occ.fragment([(3, box)], [(2, patch)])
    occ.synchronize()

    def classify(x, y, z):
        if abs(z + 1) < 1e-9:
            return "bottom"
        if abs(z - 1) < 1e-9 and abs(x) < 0.5 and abs(y) < 0.5:
            return "indent"
        return "free"

    boundary_groups(classify)
    gmsh.model.mesh.setSize(gmsh.model.getEntities(0), 0.7 * f)
    write("block", 0.7 * f)


def cylinder(f):
    gmsh.model.add("cylinder")
    occ = gmsh.model.occ
    outer = occ.addCylinder(0, 0, 0, 0, 0, 4, 1.0)
    inner = occ.addCylinder(0, 0, 0, 0, 0, 4, 0.75)
    occ.cut([(3, outer)], [(3, inner)])
    occ.synchronize()

    def classify(x, y, z):
        if abs(z) < 1e-9:
            return "bottom"
        if abs(z - 4) < 1e-9:
            return "top"
        return "lateral"

    boundary_groups(classify)
    gmsh.model.mesh.setSize(gmsh.model.getEntities(0), 0.5 * f)
    write("cylinder", 0.5 * f)


# The first cavity is moved inward from (-0.7, -0.7, 0): at that center a
# radius-0.15 ball would cross the unit sphere.
CAVITIES = [((-0.5, -0.5, 0.0), 0.15), ((0.25, 0.25, 0.25), 0.2)]


def sphere(f):
    gmsh.model.add("sphere")
    occ = gmsh.model.occ
    ball = occ.addSphere(0, 0, 0, 1.0)
    holes = [(3, occ.addSphere(*c, r)) for c, r in CAVITIES]
    occ.cut([(3, ball)], holes)
    occ.synchronize()

    def classify(x, y, z):
        # surface centers of mass of full spheres sit at their centers
        for c, _ in CAVITIES:
            if math.dist((x, y, z), c) < 1e-6:
                return "cavity"
        return "outer"

    boundary_groups(classify)
    gmsh.model.mesh.setSize(gmsh.model.getEntities(0), 0.15 * f)
    write("sphere", 0.7 * f)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size-factor", type=float, default=1.0)
    args = parser.parse_args()
    gmsh.initialize()
    gmsh.option.setNumber("General.Terminal", 0)
    try:
        for build in (block, cylinder, sphere):
            build(args.size_factor)
    finally:
        gmsh.finalize()


if __name__ == "__main__":
    main()
