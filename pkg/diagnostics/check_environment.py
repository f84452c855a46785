#!/usr/bin/env python3
"""
Environment checker for BLPP Lab.
Validates dependencies, the package import and one tiny experiment run.
"""

import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def check_files():
    """Check if required files exist"""
    print("\n📁 Checking Required Files...")
    required_files = ["blpp_lab.py", "requirements.txt", "pyproject.toml", "src/cli.py"]

    missing = []
    for file in required_files:
        if (ROOT / file).exists():
            print(f"  ✓ {file}")
        else:
            print(f"  ✗ {file} - MISSING")
            missing.append(file)
    return len(missing) == 0


def check_imports():
    """Test critical imports"""
    print("\n📦 Testing Critical Imports...")
    sys.path.insert(0, str(ROOT))

    critical_modules = ["numpy", "scipy", "pandas", "statsmodels", "tqdm", "dotenv", "src.cli"]
    failed = []
    for module in critical_modules:
        try:
            __import__(module)
            print(f"  ✓ {module}")
        except ImportError as exc:
            print(f"  ✗ {module} - {exc}")
            failed.append(module)
    return len(failed) == 0


def check_smoke_run():
    """Run a tiny pitman experiment end to end"""
    print("\n🎲 Smoke Run...")
    from src.cli import main

    with tempfile.TemporaryDirectory() as out:
        code = main(["pitman", "--t-min", "-1", "--t-max", "1", "--step", "0.01",
                     "--replicas", "4", "--parallel", "1", "--out", out, "--quiet"])
        written = sorted(p.name for p in Path(out).iterdir())
    print(f"  exit code {code}, wrote {', '.join(written)}")
    return code == 0 and "summary.csv" in written


def main():
    print("=" * 60)
    print("🩺 BLPP Lab Environment Check")
    print("=" * 60)

    checks = [("Files", check_files), ("Imports", check_imports), ("Smoke run", check_smoke_run)]
    results = {}
    for name, check in checks:
        try:
            results[name] = check()
        except Exception as exc:
            print(f"  ✗ {name} failed: {exc}")
            results[name] = False

    print("\n" + "=" * 60)
    for name, ok in results.items():
        print(f"{'✅' if ok else '❌'} {name}")
    print("=" * 60)
    return 0 if all(results.values()) else 1


if __name__ == "__main__":
    sys.exit(main())
