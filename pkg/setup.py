import setuptools

setuptools.setup(
    name="mqtt_ids",
    version="0.1",
    description="Packet- and flow-level intrusion detection experiments for MQTT sensor networks.",
    author="OpenSearch Migrations",
    packages=setuptools.find_packages(exclude=["tests"]),
    py_modules=['cli'],
    install_requires=[
        "Click",
        "deepdiff",
        "dpkt>=1.9.8",
        "numpy"
    ],
    extras_require={
        'dev': ['flake8', 'pytest'],
    },
    python_requires=">=3.9",
    entry_points={
        'console_scripts': [
            'mqttids = cli:main'
        ]
    }
)
