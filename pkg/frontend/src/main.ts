import "./style.css";
import { buildApp } from "./app";
import { httpApi } from "./client";

buildApp(document.getElementById("app")!, httpApi());
