use proptest::prelude::*;
use serde_json::{json, Value};
use toolflow::llm::{decode_wire, encode_wire, ParamType, ProviderRequest, ToolSchema};
use toolflow::message::{check_history, Arguments, Message, ToolCall};

fn arg_value() -> impl Strategy<Value = Value> {
    prop_oneof![
        any::<i64>().prop_map(Value::from),
        (-1e6f64..1e6).prop_map(|f| json!(f)),
        any::<bool>().prop_map(Value::from),
        "[a-zA-Z0-9 /._-]{0,24}".prop_map(Value::from),
    ]
}

fn arguments() -> impl Strategy<Value = Arguments> {
    prop::collection::btree_map("[a-z_]{1,10}", arg_value(), 0..4)
}

fn text() -> impl Strategy<Value = String> {
    "[ -~\\n]{0,40}"
}

/// A valid history: user prompt, then rounds of assistant calls answered by
/// tool messages, then an optional closing assistant reply.
fn history() -> impl Strategy<Value = Vec<Message>> {
    let round = (
        text(),
        prop::collection::vec(("[a-z_]{1,8}", arguments(), text()), 1..4),
        prop::option::of("[a-z]{1,8}"),
    );
    (
        text(),
        prop::collection::vec(round, 0..3),
        prop::option::of(text()),
    )
        .prop_map(|(prompt, rounds, closing)| {
            let mut msgs = vec![Message::user(prompt)];
            for (r, (content, calls, agent)) in rounds.into_iter().enumerate() {
                let tool_calls: Vec<ToolCall> = calls
                    .iter()
                    .enumerate()
                    .map(|(i, (name, args, _))| {
                        ToolCall::new(format!("call_{r}_{i}"), name.clone(), args.clone())
                    })
                    .collect();
                let mut m = Message::assistant_with_calls(content, tool_calls.clone());
                m.agent_name = agent;
                msgs.push(m);
                for (call, (_, _, answer)) in tool_calls.iter().zip(calls) {
                    msgs.push(Message::tool(call.id.clone(), answer));
                }
            }
            if let Some(c) = closing {
                msgs.push(Message::assistant(c));
            }
            msgs
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn message_json_round_trip(msgs in history()) {
        check_history(&msgs).unwrap();
        let text = serde_json::to_string(&msgs).unwrap();
        let back: Vec<Message> = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, msgs);
    }

    #[test]
    fn wire_round_trip(msgs in history(), cap in prop::option::of(1u32..100)) {
        let mut messages = vec![Message::system("be brief").with_agent("simulator")];
        messages.extend(msgs);
        let request = ProviderRequest {
            model: "m".into(),
            messages,
            tools: vec![ToolSchema::new("run_md", "simulate")
                .param("structure_path", ParamType::String, "pdb", true)
                .param("temperature", ParamType::Number, "K", true)],
            max_parallel_tool_calls: cap,
        };
        let back = decode_wire(&encode_wire(&request)).unwrap();
        prop_assert_eq!(back, request);
    }
}
