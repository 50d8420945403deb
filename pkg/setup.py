from setuptools import setup

setup(
    name="robust_design",
    version="1.0.0",
    packages=["create_robust_design", "minimax_design_lib"],
    package_dir={"minimax_design_lib": "minimax_design_lib/minimax_design_lib"},
    install_requires=[
        "glog>=0.3",
        "numpy>=1.17",
        "progressbar2>=3.40",
        "psutil>=5",
        "python-decouple>=3.1",
        "PyYAML>=5.1",
        "scipy>=1.1",
        "statsd>=3.3",
    ],
    entry_points={
        "console_scripts": [
            "robust_design=create_robust_design.robust_design:main",
            "read_robust_design=create_robust_design.read_results:main",
        ]
    },
)
