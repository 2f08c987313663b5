"""
The network, one layer at a time
================================

A window (4 x 512) goes through four parallel temporal convolutions with
kernel lengths 16, 32, 64 and 128 samples. Their outputs are stacked to 32
feature maps, batch-normalized and passed through ELU. Each map is pooled
in windows of 32 samples twice, once by mean and once by variance, and the
two pooled maps are merged into a 32 x 16 latent representation.

Two heads read the latent: a small MLP reconstructs the average-pooled input
(4 x 16), and a linear layer gives three cognitive-load logits.

Run: python3 demos/02_model_forward.py
"""

import numpy as np

from musecognet import ModelConfig, forward, init_params
from musecognet.data_io import synth_generate
from musecognet.model import branch_frequencies, param_shapes

config = ModelConfig()
rng = np.random.Generator(np.random.Philox(0))
params = init_params(config, rng)

print("parameters:")
for name, shape in param_shapes(config).items():
    print(f"  {name:<18} {str(shape):<14} {int(np.prod(shape)):>7}")
trainable = sum(v.size for k, v in params.items() if not k.startswith("bn.running"))
print("trainable values:", trainable)

# kernel length k spans one full cycle of fs / k Hz
for k, f in zip(config.kernel_lengths, branch_frequencies(config)):
    print(f"kernel {k:>3} samples = {k / 256 * 1000:5.1f} ms, one cycle of {f:.0f} Hz")

windows = synth_generate(2, 2, seed=0)
x = np.stack([w.segment.data for w in windows])
logits, recon, trace = forward(x, params, config, mode="train")

print()
print("input          ", x.shape)
print("branch features", trace.features.shape)
print("avg / var pool ", trace.avg.shape, trace.var.shape)
print("latent         ", trace.latent.shape)
print("reconstruction ", recon.shape)
print("logits         ", logits.shape)
print("class probabilities of the untrained model:")
print(trace.probs.round(3))

# inference mode uses running statistics, so a single window works
single, _, _ = forward(x[:1], params, config, mode="infer")
print("inference logits for one window:", single.round(4))

# the cheaper merge variant keeps each feature map separate
depthwise = ModelConfig(merge_mode="depthwise")
print("merge weight mixing:", param_shapes(config)["merge.weight"], " depthwise:", param_shapes(depthwise)["merge.weight"])
