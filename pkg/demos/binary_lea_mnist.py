"""Binary-LEA on a scaled MNIST-5 task.

Full LEA would train 5! = 120 simulated models. Binary-LEA resolves the
clusters two at a time (largest first) and trains 20 + 6 = 26.
"""
import math

from lea_vfl.attack import count_binary_models
from lea_vfl.experiment import load_config, run_timing_comparison

for n in (3, 5, 10):
    print(f"n = {n:2d}: LEA {math.factorial(n):>8d} simulated models, Binary-LEA {count_binary_models(n)}")

cfg = load_config("timing-mnist5")
print(f"\n{cfg.name}: {cfg.per_class} images per digit, digits {cfg.digits}, partition "
      f"{cfg.partition_label()}")
table = run_timing_comparison(cfg)
for row in table["rows"]:
    print(f"  {row['scheme']:<11s} {row['n_simulated']:4d} models  {row['seconds']:6.2f}s  ASR {row['asr']:.3f}")
print(f"  Binary-LEA / LEA wall-clock: {table['ratio']:.2f}")
