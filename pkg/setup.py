# -*- coding: utf-8 -*-
import setuptools


def read_requirements(file_):
    lines = []
    with open(file_) as f:
        for line in f.readlines():
            lines.append(line.strip())
    return sorted(list(set(line for line in lines if line)))


with open("VERSION") as f:
    VERSION = f.read().strip()


setuptools.setup(
    name="trex-routing",
    version=VERSION,
    description="Trip-based public transit routing with multi-level transfer overlays",
    install_requires=read_requirements("requirements.txt"),
    entry_points={"console_scripts": ["trex=trex.cli:main"]},
    packages=setuptools.find_packages(exclude=["tests"]),
    python_requires=">=3.8",
    include_package_data=True,
    zip_safe=False,
)
