"""
One MZI, then a mesh of them
============================

Builds the 2x2 transfer matrix of a Mach-Zehnder interferometer, perturbs
its arms, and programs a random unitary onto a rectangular Clements mesh.
"""

import numpy as np

from spnn_fpv import mesh
from spnn_fpv.mzi import ArmVariations, MziConfig, PerturbationOptions, ideal_transfer, perturbed_transfer
from spnn_fpv.photonics import EimModel

np.set_printoptions(precision=4, suppress=True)
eim = EimModel()

# theta sets the split ratio, phi the output phase
T = ideal_transfer(np.pi / 2, 0.0)
print("ideal MZI, theta=pi/2:\n", T)

# rows are the four arms, columns (width nm, thickness nm) deviations
arms = np.array([[4.0, 1.0], [-3.0, 1.0], [0.0, 0.0], [2.0, -1.0]])
v = ArmVariations(arms)
Tp = perturbed_transfer(MziConfig(np.pi / 2, 0.0), v, eim)
print("perturbed:\n", Tp)
print("still unitary:", np.allclose(Tp.conj().T @ Tp, np.eye(2)))

# the calibrated view only keeps the phase difference between arms
opts = PerturbationOptions(phase_reference="differential")
print("power error |T|^2:", np.abs(np.abs(perturbed_transfer(MziConfig(np.pi / 2, 0.0), v, eim, opts))**2
                                   - np.abs(T)**2).max())

# a random 8x8 unitary and its 28 MZIs
rng = np.random.default_rng(0)
Z = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
U, _ = np.linalg.qr(Z)
prog = mesh.clements_decompose(U)
print(f"{len(prog)} MZIs, reconstruction error {np.linalg.norm(mesh.reconstruct(prog) - U):.1e}")

# a full layer W = U Sigma Vh
W = rng.normal(size=(6, 8))
dec = mesh.decompose_layer(W)
print("layer MZIs (U + Sigma + Vh):", dec.mzi_count, " residual", np.abs(dec.nominal() - W).max())
