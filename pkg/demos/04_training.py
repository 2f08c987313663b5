"""
Training on synthetic EEG
=========================

The synthetic generator produces one sinusoid per class (6, 10, 20 Hz)
with random phases, a per-subject amplitude and noise 6 dB below the
signal. This script trains on 64 windows and watches the joint loss:
cross-entropy plus 0.5 times the reconstruction error.

Run: python3 demos/04_training.py   (about 20 seconds)
"""

import io
import tempfile
from pathlib import Path

import numpy as np

from musecognet import ModelConfig, TrainConfig, accuracy, predict, synth_generate, train
from musecognet import checkpoint

windows = synth_generate(2, 11, seed=1)[:64]
print("training windows:", len(windows), " labels:", np.bincount([w.label for w in windows]))

config = ModelConfig()
stream = io.StringIO()
params, history = train(windows, config, TrainConfig(epochs=30, seed=0), history_stream=stream)

print(" epoch      ce    pool   total   acc")
for h in history[::3]:
    print(f"{h.epoch:>6} {h.ce:7.4f} {h.pool:7.4f} {h.total:7.4f} {h.train_accuracy:5.1f}")

# the same records, one JSON object per line
print("last history line:", stream.getvalue().splitlines()[-1])

preds = predict(params, windows, config)
print(f"inference accuracy on the training set: {accuracy(preds, [w.label for w in windows]):.1f}%")

# checkpoints are a text manifest followed by float32 tensors
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "model.ckpt"
    checkpoint.save(path, params, config)
    head = path.read_bytes().split(b"END\n")[0].decode().splitlines()
    print(f"checkpoint {path.stat().st_size} bytes; first manifest lines:")
    for line in head[:4]:
        print("   ", line)
    loaded, loaded_config = checkpoint.load(path)
    again = predict(loaded, windows, loaded_config)
    print("reloaded model agrees on", int(np.sum(np.asarray(again) == np.asarray(preds))), "of", len(windows))

