#!/usr/bin/env python
"""
Setup script for thermal_cluster
"""
import subprocess
import sys
from pathlib import Path

ENV_TEMPLATE = """# Django Settings
SECRET_KEY=django-insecure-local-simulation-only
DEBUG=True

# Simulation Settings
CVSIM_OUTPUT_DIR=output
CVSIM_DEFAULT_SEED=42
CVSIM_TOLERANCE=1e-9
CVSIM_MC_SAMPLES=10000
CVSIM_LOG_LEVEL=INFO
"""


def run_command(args, description):
    """Run a command and report the outcome"""
    print(f"🔄 {description}...")
    try:
        subprocess.run(args, check=True, capture_output=True, text=True)
        print(f"✅ {description} completed successfully")
        return True
    except subprocess.CalledProcessError as e:
        print(f"❌ {description} failed: {e.stderr}")
        return False


def main():
    print("🚀 Setting up Thermal Cluster...")

    if not Path("manage.py").exists():
        print("❌ Please run this script from the project root directory")
        sys.exit(1)

    if not run_command([sys.executable, "-m", "pip", "install", "-r", "requirements.txt"], "Installing requirements"):
        sys.exit(1)

    if not Path(".env").exists():
        Path(".env").write_text(ENV_TEMPLATE)
        print("📝 .env file created")

    if not run_command([sys.executable, "manage.py", "migrate"], "Running migrations"):
        sys.exit(1)

    # smoke run, seconds
    if not run_command([sys.executable, "manage.py", "threshold_table", "--no-record"], "Writing threshold table"):
        sys.exit(1)

    print("\n🎉 Setup completed successfully!")
    print("\n📋 Next steps:")
    print("1. Run: python manage.py kappa_sweep")
    print("2. Run: python manage.py delete_check")
    print("3. Reports land in the directory named by CVSIM_OUTPUT_DIR")


if __name__ == "__main__":
    if len(sys.argv) > 1:
        # invoked by a build frontend (pip / setuptools commands)
        from setuptools import setup

        setup()
    else:
        main()
