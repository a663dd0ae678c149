"""
Network accuracy under fabrication variations
=============================================

Trains Network-1 on FFT-compressed MNIST, maps it onto 687 MZIs and compares
accuracy on one die with and without region-based design.
"""

from pathlib import Path

from spnn_fpv import experiments as ex, spnn
from spnn_fpv.photonics import EimModel
from spnn_fpv.varmap import VariationParams

data = Path(__file__).resolve().parents[1] / "data" / "mnist"
Xtr, ytr, Xte, yte = spnn.load_mnist(data)
model = spnn.network1(0)
Ftr, Fte = model.features(Xtr / 255.0), model.features(Xte / 255.0)
model = spnn.train(model, Ftr, ytr, spnn.TrainConfig(), Fte, yte)
print(f"software test accuracy {model.meta['test_accuracy']:.4f}")

net = ex.PhotonicNetwork.build(spnn.decompose_model(model))
print(f"{net.mzi_count} MZIs, {net.phase_shifters} phase shifters, die {net.extent[2]:.0f} x {net.extent[3]:.0f} um")

eim = EimModel()
policies = [ex.Policy.parse(p) for p in ("none", "R12-strip", "R3-strip", "R1-strip", "R3-ridge")]
for l in (100.0, 1000.0):
    res = ex.run_network_trials(model, Fte, yte, policies, eim, corr_lengths=(l,), modes=("W+T",), trials=2)
    for row in ex.summarize(res):
        print(f"l={l:6g} {row['policy']:10s} accuracy {row['accuracy_mean']:.4f}  "
              f"normalized RVD {row['normalized_rvd_mean']:.2e}")
