"""solaris_kit: a desk-scale two-player world-model training kit.

Layers, bottom up: `substrate` (float32 tensors with a recording tape),
`flowmatch` (noising and velocity-matching losses), `masks` (attention
layouts), `mpdit` (the multiplayer video transformer), `argen`
(autoregressive frame generation), `selfforce` (post-training on the
model's own rollouts), `gridworld` (the data engine), `evalbench`
(programmatic judging), and `pipeline` (training stages and the CLI).
"""

__version__ = "0.1.0"
