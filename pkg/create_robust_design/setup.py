from setuptools import setup

setup(
    name="create_robust_design",
    version="0.1",
    description="Construct robust minimax regression designs",
    long_description="This project turns a YAML run configuration into designs, "
    + "variance / maximum-bias frontiers and integer run allocations.",
    classifiers=[
        "Development Status :: 4 - Beta",
        "License :: OSI Approved :: Mozilla Public License 2.0 (MPL 2.0)",
        "Programming Language :: Python :: 3",
    ],
    keywords="optimal experimental design minimax robust regression frontier",
    license="Mozilla Public License 2.0 (MPL 2.0)",
    install_requires=[
        "glog",
        "minimax_design_lib",
        "numpy",
        "progressbar2",
        "psutil",
        "python-decouple",
        "PyYAML",
        "statsd",
    ],
    include_package_data=True,
    zip_safe=False,
)
