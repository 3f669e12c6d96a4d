#!/usr/bin/env python3
"""
Test runner for the light-source-transfer engine.

Runs the suite category by category and prints a pass/fail summary.
Pass --slow to include the desk-scale training acceptance runs.
"""

import sys
import subprocess
from pathlib import Path

TEST_CATEGORIES = [
    ("Autograd Engine Tests", ["tests/test_kernels.py", "tests/test_tensor.py", "tests/test_optim.py"]),
    ("Network Block Tests", ["tests/test_blocks.py", "tests/test_relight.py"]),
    ("Loss & Metric Tests", ["tests/test_losses.py", "tests/test_metrics.py"]),
    ("Synthetic Corpus Tests", ["tests/test_render.py", "tests/test_corpus.py", "tests/test_image_io.py"]),
    ("Configuration Tests", ["tests/test_configuration.py"]),
    ("Persistence & Training Tests", ["tests/test_checkpoint.py", "tests/test_trainer.py"]),
    ("CLI Tests", ["tests/test_cli.py"]),
]

SLOW_CATEGORY = ("Acceptance Runs", ["tests/test_acceptance.py"])


def run_tests(include_slow: bool = False) -> int:
    """Run all test categories and report results."""
    print("🧪 Running Light-Source-Transfer Engine Tests")
    print("=" * 50)

    project_root = Path(__file__).parent
    categories = TEST_CATEGORIES + ([SLOW_CATEGORY] if include_slow else [])
    marker = [] if include_slow else ["-m", "not slow"]

    total_passed = 0
    failed_categories = []

    for category_name, test_files in categories:
        print(f"\n📋 Running {category_name}...")
        cmd = [sys.executable, "-m", "pytest", *test_files, "-q", "--tb=short", *marker]
        try:
            result = subprocess.run(cmd, cwd=project_root, capture_output=True, text=True)
        except OSError as e:
            print(f"❌ {category_name}: ERROR - {e}")
            failed_categories.append(category_name)
            continue

        if result.returncode == 0:
            print(f"✅ {category_name}: PASSED")
            total_passed += 1
        else:
            print(f"❌ {category_name}: FAILED")
            failed_categories.append(category_name)
            tail = result.stdout.strip().splitlines()[-1:] or result.stderr.strip().splitlines()[-1:]
            if tail:
                print(f"   {tail[0]}")

    print("\n" + "=" * 50)
    print("📊 TEST SUMMARY")
    print("=" * 50)
    print(f"✅ Test Categories Passed: {total_passed}")
    print(f"❌ Test Categories Failed: {len(failed_categories)}")

    if not failed_categories:
        print("\n🎉 ALL TESTS PASSED!")
        return 0
    print(f"\n⚠️  Failed categories: {', '.join(failed_categories)}")
    return 1


if __name__ == "__main__":
    sys.exit(run_tests(include_slow="--slow" in sys.argv[1:]))
