#!/usr/bin/env python3
"""
Test runner script for the GNN geolocation pipeline.

Provides convenient commands for running different test suites and generating reports.
"""

import sys
import subprocess
import argparse

SUITES = {
    "all": (["-m", "slow or not slow"], "All tests"),
    "fast": (["-m", "not slow"], "Fast tests"),
    "unit": (["-m", "unit and not slow"], "Unit tests"),
    "integration": (["-m", "integration and not slow"], "Integration tests"),
    "cli": (["-m", "cli"], "Command-line tests"),
    "config": (["-m", "config"], "Configuration tests"),
    "slow": (["-m", "slow"], "Slow tests (synthetic benchmarks)"),
}


def run_command(cmd, description):
    """Run a command and handle errors."""
    print(f"\n{'='*60}")
    print(f"Running: {description}")
    print(f"Command: {' '.join(cmd)}")
    print(f"{'='*60}")

    try:
        subprocess.run(cmd, check=True, capture_output=False)
        print(f"\n{description} completed successfully")
        return True
    except subprocess.CalledProcessError as e:
        print(f"\n{description} failed with exit code {e.returncode}")
        return False
    except FileNotFoundError:
        print(f"\nCommand not found: {cmd[0]}")
        print("Make sure pytest is installed: pip install -r requirements-dev.txt")
        return False


def main():
    parser = argparse.ArgumentParser(description="Run tests for the GNN geolocation pipeline")
    parser.add_argument(
        "suite",
        nargs="?",
        choices=list(SUITES) + ["coverage"],
        default="fast",
        help="Test suite to run (default: fast)"
    )
    parser.add_argument(
        "--verbose", "-v",
        action="store_true",
        help="Verbose output"
    )
    parser.add_argument(
        "--no-cov",
        action="store_true",
        help="Disable coverage reporting"
    )
    parser.add_argument(
        "--failfast", "-x",
        action="store_true",
        help="Stop on first failure"
    )
    parser.add_argument(
        "--lf",
        action="store_true",
        help="Run only tests that failed in the last run"
    )

    args = parser.parse_args()

    cmd = [sys.executable, "-m", "pytest"]

    if args.verbose:
        cmd.append("-vv")

    if args.no_cov:
        cmd.append("--no-cov")

    if args.failfast:
        cmd.append("-x")

    if args.lf:
        cmd.append("--lf")

    if args.suite == "coverage":
        cmd.extend([
            "--cov=app",
            "--cov-report=html:htmlcov",
            "--cov-report=term-missing",
            "--cov-report=xml",
            "tests/"
        ])
        success = run_command(cmd, "Coverage analysis")

        if success:
            print("\nCoverage report generated:")
            print("   HTML: htmlcov/index.html")
            print("   XML:  coverage.xml")
    else:
        markers, description = SUITES[args.suite]
        cmd.extend(markers + ["tests/"])
        success = run_command(cmd, description)

    print(f"\n{'='*60}")
    if success:
        print("All tests completed successfully!")
    else:
        print("Some tests failed!")
        print("\nTips for debugging:")
        print("  - Run with --verbose for more details")
        print("  - Run with --failfast to stop on first failure")
        print("  - Run with --lf to only run failed tests")
    print(f"{'='*60}")

    return 0 if success else 1


if __name__ == "__main__":
    sys.exit(main())
