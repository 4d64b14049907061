"""Write a small on-disk toy dataset plus a config file for CLI runs."""

from pathlib import Path

from pyramidlstm.toy import toy_dataset
from pyramidlstm.volume import write_labels, write_vol


def write_workspace(root, seed=0, count=3, dims=(16, 16, 8), layers="pyramid:2, fc:2:softmax",
                    filter_size=3, stages="6@8x8x4, 4@12x12x6", checkpoint_every=2, tile="8x8x4"):
    root = Path(root)
    raw = root / "raw"
    raw.mkdir(parents=True, exist_ok=True)
    pairs = toy_dataset(seed, count, dims)
    for n, (x, lab) in enumerate(pairs):
        write_vol(raw / f"em{n}.vol", x)
        write_labels(raw / f"em{n}.lab", lab)

    def cfg(name, extra):
        text = f"""[run]
seed = {seed}
out = {root / 'out'}

[arch]
input_channels = 1
num_classes = 2
filter_size = {filter_size}
layers = {layers}

[data]
train_inputs = {', '.join(str(root / f'pre{n}.vol') for n in range(count - 1))}
train_labels = {', '.join(str(raw / f'em{n}.lab') for n in range(count - 1))}

[augment]
flip_x = true
flip_y = true
flip_z = true

[schedule]
stages = {stages}
checkpoint_every = {checkpoint_every}

[predict]
tile = {tile}
""" + extra
        path = root / name
        path.write_text(text)
        return path

    configs = {}
    for n in range(count):
        configs[f"pre{n}"] = cfg(f"pre{n}.ini", f"""
[preprocess]
modalities = em
em = {raw / f'em{n}.vol'}
output = {root / f'pre{n}.vol'}
""")
    held = count - 1
    configs["main"] = cfg("main.ini", f"""input = {root / f'pre{held}.vol'}
output_probs = {root / 'probs.vol'}
output_labels = {root / 'pred.lab'}

[evaluate]
prediction = {root / 'pred.lab'}
reference = {raw / f'em{held}.lab'}
classes = 0, 1
output = {root / 'metrics.csv'}
""")
    return configs, pairs
