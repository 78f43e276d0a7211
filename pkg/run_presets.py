#!/usr/bin/env python3
"""
Run the three built-in scaling experiments back to back
"""
import os
import sys

# Output location and parallelism for the sweeps
os.environ.setdefault('PI_OUTPUT_DIR', 'results')
os.environ.setdefault('PI_WORKERS', str(os.cpu_count() or 1))
os.environ.setdefault('PI_METRICS_FILE', os.path.join(os.environ['PI_OUTPUT_DIR'], 'experiments.prom'))
os.environ.setdefault('PI_LOG_LEVEL', 'INFO')

print("🎯 Running Projective Integration scaling experiments:")
print(f"  📁 Output: {os.environ['PI_OUTPUT_DIR']}")
print(f"  🧮 Workers: {os.environ['PI_WORKERS']}")
print(f"  📊 Metrics: {os.environ['PI_METRICS_FILE']}")
print("-" * 60)

from experiments import PRESET_TEXT, main

if __name__ == "__main__":
    os.makedirs(os.environ['PI_OUTPUT_DIR'], exist_ok=True)
    status = 0
    for preset in sorted(PRESET_TEXT):
        code = main(["run", "--preset", preset])
        if code != 0:
            print(f"❌ {preset} failed with exit code {code}")
            status = status or code
    sys.exit(status)
