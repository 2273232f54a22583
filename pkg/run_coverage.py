import subprocess
import sys
import webbrowser
import os


def main():
    """
    Run the fast test suite with coverage of the dynopt package, write an HTML
    report and open it in the default web browser.

    Slow ventilator solves are skipped unless --all is given.
    """
    args = [sys.executable, "-m", "pytest", "--cov=src/dynopt", "--cov-report=html"]
    if "--all" not in sys.argv[1:]:
        args += ["-m", "not slow"]
    print("Running tests with coverage...")
    result = subprocess.run(args)
    if result.returncode != 0:
        print("\nTests failed. Coverage report may be incomplete.")
    else:
        html_path = os.path.abspath("htmlcov/index.html")
        print(f"\nCoverage HTML report generated at: {html_path}")
        if os.path.exists(html_path):
            print("Opening coverage report in your default browser...")
            webbrowser.open(f"file://{html_path}")
        else:
            print("Coverage HTML report not found.")


if __name__ == "__main__":
    main()
