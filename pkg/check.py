#!/usr/bin/env python3
"""
Development helper script to run tests and code quality checks using the virtual environment.
This ensures we always use the correct Python environment.
"""

import subprocess
import sys
from pathlib import Path

CHECKS = {
    "test": (["-m", "pytest", "--cov=src/dynopt", "--cov-report=xml"], "tests"),
    "fast": (["-m", "pytest", "-m", "not slow and not performance"], "fast tests"),
    "lint": (["-m", "pylint", "src/dynopt"], "pylint"),
    "style": (["-m", "flake8", "--max-line-length=120", "src/dynopt", "tests"], "flake8"),
    "format": (["-m", "black", "--check", "--line-length=120", "src/dynopt"], "black"),
    "types": (["-m", "mypy", "--ignore-missing-imports", "src/dynopt"], "mypy"),
}
ALL = ("test", "lint", "style", "types")


def get_python_executable():
    """Get the appropriate Python executable to use."""
    project_root = Path(__file__).parent
    for venv_python in (project_root / ".venv" / "Scripts" / "python.exe",
                        project_root / ".venv" / "bin" / "python"):
        if venv_python.exists():
            return str(venv_python)

    # Fall back to system Python (for CI environments)
    print("📝 No virtual environment found, using system Python")
    return sys.executable


def run_command(cmd_args, description="Command"):
    """Run a command using the appropriate Python executable."""
    python_exe = get_python_executable()
    full_cmd = [python_exe] + cmd_args

    print(f"🔧 Running {description}: {' '.join(full_cmd)}")

    try:
        result = subprocess.run(full_cmd, check=True, capture_output=True, text=True)
        print(f"✅ {description} completed successfully")
        if result.stdout:
            print(result.stdout)
        return True
    except subprocess.CalledProcessError as e:
        print(f"❌ {description} failed")
        if e.stdout:
            print("STDOUT:", e.stdout)
        if e.stderr:
            print("STDERR:", e.stderr)
        return False


def run_checks(names=ALL):
    """Run the named checks and return True if all passed."""
    print("🚀 Starting development checks...")
    results = [run_command(*CHECKS[name]) for name in names]
    return all(results)


def main():
    """Main function to handle command line arguments."""
    command = sys.argv[1].lower() if len(sys.argv) > 1 else "all"

    if command == "help":
        print(f"""
🔧 Development Check Script

Usage:
  python check.py [command]

Available commands:
  {', '.join(CHECKS)}
  all     - Run {', '.join(ALL)} (default)
  help    - Show this help message

Examples:
  python check.py fast    # Skip the slow ventilator solves
  python check.py lint    # Run pylint only
  python check.py         # Run all checks (default)
        """)
        return

    if command == "all":
        success = run_checks()
    elif command in CHECKS:
        success = run_command(*CHECKS[command])
    else:
        print(f"❌ Unknown command: {command}")
        print("Use 'python check.py help' for available commands")
        sys.exit(1)

    sys.exit(0 if success else 1)


if __name__ == "__main__":
    main()
